"""First-order syntax, finite structures, brute-force satisfaction, products.

Everything here is immutable after construction and every operation is a
pure function of its inputs, so concurrent use is safe.  The evaluators are
deliberately naive: they are the ground-truth oracle the rest of the
package is checked against.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterator, List, Mapping, Optional, Sequence, Tuple

from .errors import (
    EvaluationError,
    ProductSizeError,
    SignatureError,
    StructureError,
)

DEFAULT_PRODUCT_CAP = 10**6


# ---------------------------------------------------------------------------
# signatures


@dataclass(frozen=True)
class Signature:
    """Relation/function arities and constant symbols of the language."""

    relations: Mapping[str, int] = field(default_factory=dict)
    functions: Mapping[str, int] = field(default_factory=dict)
    constants: FrozenSet[str] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "relations", dict(self.relations))
        object.__setattr__(self, "functions", dict(self.functions))
        object.__setattr__(self, "constants", frozenset(self.constants))
        names = (
            list(self.relations) + list(self.functions) + list(self.constants)
        )
        if len(names) != len(set(names)):
            raise SignatureError("symbol names must be pairwise distinct")
        for name, arity in itertools.chain(
            self.relations.items(), self.functions.items()
        ):
            if arity < 1:
                raise SignatureError(f"arity of {name} must be positive")

    def __eq__(self, other):
        if not isinstance(other, Signature):
            return NotImplemented
        return (
            self.relations == other.relations
            and self.functions == other.functions
            and self.constants == other.constants
        )

    def __hash__(self):
        return hash(
            (
                tuple(sorted(self.relations.items())),
                tuple(sorted(self.functions.items())),
                tuple(sorted(self.constants)),
            )
        )


# ---------------------------------------------------------------------------
# terms and formulas


class Term:
    pass


@dataclass(frozen=True)
class Var(Term):
    name: str


@dataclass(frozen=True)
class Const(Term):
    name: str


@dataclass(frozen=True)
class Func(Term):
    name: str
    args: Tuple[Term, ...]


class Formula:
    pass


@dataclass(frozen=True)
class Eq(Formula):
    left: Term
    right: Term


@dataclass(frozen=True)
class Rel(Formula):
    name: str
    args: Tuple[Term, ...]


@dataclass(frozen=True)
class Not(Formula):
    sub: Formula


@dataclass(frozen=True)
class And(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Or(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Implies(Formula):
    left: Formula
    right: Formula


@dataclass(frozen=True)
class Exists(Formula):
    var: str
    body: Formula


@dataclass(frozen=True)
class Forall(Formula):
    var: str
    body: Formula


def term_vars(t: Term) -> FrozenSet[str]:
    if isinstance(t, Var):
        return frozenset((t.name,))
    if isinstance(t, Const):
        return frozenset()
    if isinstance(t, Func):
        out = frozenset()
        for a in t.args:
            out |= term_vars(a)
        return out
    raise TypeError(f"not a term: {t!r}")


def free_tuple(f: Formula) -> Tuple[str, ...]:
    """Sorted free variables, cached on the formula object."""
    got = f.__dict__.get("_free_tuple")
    if got is None:
        got = tuple(sorted(free_vars(f)))
        f.__dict__["_free_tuple"] = got
    return got


def free_vars(f: Formula) -> FrozenSet[str]:
    if isinstance(f, Eq):
        return term_vars(f.left) | term_vars(f.right)
    if isinstance(f, Rel):
        out = frozenset()
        for a in f.args:
            out |= term_vars(a)
        return out
    if isinstance(f, Not):
        return free_vars(f.sub)
    if isinstance(f, (And, Or, Implies)):
        return free_vars(f.left) | free_vars(f.right)
    if isinstance(f, (Exists, Forall)):
        return free_vars(f.body) - {f.var}
    raise TypeError(f"not a formula: {f!r}")


def validate_formula(f: Formula, sig: Signature) -> None:
    """Check every symbol of f against sig; raises SignatureError."""
    if isinstance(f, Eq):
        _validate_term(f.left, sig)
        _validate_term(f.right, sig)
    elif isinstance(f, Rel):
        if f.name not in sig.relations:
            raise SignatureError(f"unknown relation {f.name}")
        if len(f.args) != sig.relations[f.name]:
            raise SignatureError(
                f"relation {f.name} expects {sig.relations[f.name]} arguments,"
                f" got {len(f.args)}"
            )
        for a in f.args:
            _validate_term(a, sig)
    elif isinstance(f, Not):
        validate_formula(f.sub, sig)
    elif isinstance(f, (And, Or, Implies)):
        validate_formula(f.left, sig)
        validate_formula(f.right, sig)
    elif isinstance(f, (Exists, Forall)):
        validate_formula(f.body, sig)
    else:
        raise TypeError(f"not a formula: {f!r}")


def _validate_term(t: Term, sig: Signature) -> None:
    if isinstance(t, Var):
        return
    if isinstance(t, Const):
        if t.name not in sig.constants:
            raise SignatureError(f"unknown constant {t.name}")
        return
    if isinstance(t, Func):
        if t.name not in sig.functions:
            raise SignatureError(f"unknown function {t.name}")
        if len(t.args) != sig.functions[t.name]:
            raise SignatureError(
                f"function {t.name} expects {sig.functions[t.name]} arguments,"
                f" got {len(t.args)}"
            )
        for a in t.args:
            _validate_term(a, sig)
        return
    raise TypeError(f"not a term: {t!r}")


# ---------------------------------------------------------------------------
# structures and families


@dataclass(frozen=True, eq=False)
class FiniteStructure:
    """Explicit interpretation over universe {0, ..., universe_size - 1}."""

    signature: Signature
    universe_size: int
    relations: Mapping[str, FrozenSet[Tuple[int, ...]]] = field(default_factory=dict)
    functions: Mapping[str, Mapping[Tuple[int, ...], int]] = field(default_factory=dict)
    constants: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        n = self.universe_size
        if n < 1:
            raise StructureError("universe must be nonempty")
        sig = self.signature
        rels = {name: frozenset(tuples) for name, tuples in self.relations.items()}
        funs = {name: dict(table) for name, table in self.functions.items()}
        cons = dict(self.constants)
        if set(rels) != set(sig.relations):
            raise StructureError("relations do not match the signature")
        if set(funs) != set(sig.functions):
            raise StructureError("functions do not match the signature")
        if set(cons) != set(sig.constants):
            raise StructureError("constants do not match the signature")
        for name, tuples in rels.items():
            arity = sig.relations[name]
            for tup in tuples:
                if len(tup) != arity or any(not 0 <= e < n for e in tup):
                    raise StructureError(f"tuple {tup} out of range for {name}")
        for name, table in funs.items():
            arity = sig.functions[name]
            domain = set(itertools.product(range(n), repeat=arity))
            if set(table) != domain:
                raise StructureError(f"function table for {name} is not total")
            for out in table.values():
                if not 0 <= out < n:
                    raise StructureError(f"function value out of range for {name}")
        for name, value in cons.items():
            if not 0 <= value < n:
                raise StructureError(f"constant {name} out of range")
        object.__setattr__(self, "relations", rels)
        object.__setattr__(self, "functions", funs)
        object.__setattr__(self, "constants", cons)

    def __eq__(self, other):
        if not isinstance(other, FiniteStructure):
            return NotImplemented
        return (
            self.signature == other.signature
            and self.universe_size == other.universe_size
            and self.relations == other.relations
            and self.functions == other.functions
            and self.constants == other.constants
        )


@dataclass(frozen=True, eq=False)
class Family:
    """An indexed family of structures over one signature; label order is I."""

    labels: Tuple[str, ...]
    structures: Mapping[str, FiniteStructure]

    def __post_init__(self):
        labels = tuple(self.labels)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "structures", dict(self.structures))
        if not labels:
            raise StructureError("family must be nonempty")
        if len(set(labels)) != len(labels):
            raise StructureError("duplicate index label")
        if set(labels) != set(self.structures):
            raise StructureError("labels and structures disagree")
        sigs = {s.signature for s in self.structures.values()}
        if len(sigs) != 1:
            raise SignatureError("family members must share one signature")

    @property
    def signature(self) -> Signature:
        return self.structures[self.labels[0]].signature

    def restrict(self, labels: Sequence[str]) -> "Family":
        """Subfamily over the given labels, keeping the parent's order."""
        keep = set(labels)
        missing = keep - set(self.labels)
        if missing:
            raise StructureError(f"unknown labels: {sorted(missing)}")
        order = tuple(l for l in self.labels if l in keep)
        return Family(order, {l: self.structures[l] for l in order})


# ---------------------------------------------------------------------------
# satisfaction


class _Evaluator:
    """Recursive Tarskian satisfaction with per-structure memoization.

    The cache key is (id(subformula), values of its free variables), which is
    sound because formulas are immutable and stay alive for the cache's
    lifetime.  Sharing one evaluator across many formulas over the same
    structure makes partition sweeps cheap: decomposition cells share
    subformula objects.
    """

    def __init__(self, structure: FiniteStructure):
        self.s = structure
        self.cache: Dict[tuple, bool] = {}

    @staticmethod
    def _free(f: Formula) -> Tuple[str, ...]:
        return free_tuple(f)

    def term(self, t: Term, env: Dict[str, int]) -> int:
        if isinstance(t, Var):
            try:
                return env[t.name]
            except KeyError:
                raise EvaluationError(f"unbound variable {t.name}") from None
        if isinstance(t, Const):
            try:
                return self.s.constants[t.name]
            except KeyError:
                raise EvaluationError(f"unknown constant {t.name}") from None
        if isinstance(t, Func):
            table = self.s.functions.get(t.name)
            if table is None:
                raise EvaluationError(f"unknown function {t.name}")
            args = tuple(self.term(a, env) for a in t.args)
            try:
                return table[args]
            except KeyError:
                raise EvaluationError(
                    f"function {t.name} undefined on {args}"
                ) from None
        raise TypeError(f"not a term: {t!r}")

    def check(self, f: Formula, env: Dict[str, int]) -> bool:
        key = (id(f),) + tuple(env[v] for v in self._free(f))
        got = self.cache.get(key)
        if got is not None:
            return got
        result = self._check(f, env)
        self.cache[key] = result
        return result

    def _check(self, f: Formula, env: Dict[str, int]) -> bool:
        if isinstance(f, Eq):
            return self.term(f.left, env) == self.term(f.right, env)
        if isinstance(f, Rel):
            tuples = self.s.relations.get(f.name)
            if tuples is None:
                raise EvaluationError(f"unknown relation {f.name}")
            if len(f.args) != self.s.signature.relations[f.name]:
                raise EvaluationError(f"arity mismatch for {f.name}")
            return tuple(self.term(a, env) for a in f.args) in tuples
        if isinstance(f, Not):
            return not self.check(f.sub, env)
        if isinstance(f, And):
            return self.check(f.left, env) and self.check(f.right, env)
        if isinstance(f, Or):
            return self.check(f.left, env) or self.check(f.right, env)
        if isinstance(f, Implies):
            return (not self.check(f.left, env)) or self.check(f.right, env)
        if isinstance(f, (Exists, Forall)):
            want = isinstance(f, Exists)
            shadowed = env.get(f.var)
            had = f.var in env
            try:
                for e in range(self.s.universe_size):
                    env[f.var] = e
                    if self.check(f.body, env) == want:
                        return want
                return not want
            finally:
                if had:
                    env[f.var] = shadowed
                else:
                    env.pop(f.var, None)
        raise TypeError(f"not a formula: {f!r}")


def evaluate(
    s: FiniteStructure,
    f: Formula,
    assignment: Optional[Mapping[str, int]] = None,
) -> bool:
    """Classical satisfaction; quantifiers range over the full universe."""
    env = dict(assignment or {})
    missing = free_vars(f) - set(env)
    if missing:
        raise EvaluationError(f"unbound free variables: {sorted(missing)}")
    for v, e in env.items():
        if not 0 <= e < s.universe_size:
            raise EvaluationError(f"assignment for {v} out of range")
    validate_formula(f, s.signature)
    return _Evaluator(s).check(f, env)


def truth_set(fam: Family, theta: Formula) -> FrozenSet[str]:
    """Labels of the factors satisfying the sentence theta."""
    if free_vars(theta):
        raise EvaluationError("truth_set needs a sentence")
    return frozenset(
        label for label in fam.labels if evaluate(fam.structures[label], theta)
    )


# ---------------------------------------------------------------------------
# products


def product(fam: Family, max_universe: int = DEFAULT_PRODUCT_CAP) -> FiniteStructure:
    """Coordinatewise product of the family, materialized explicitly.

    Universe elements are the tuples over the factors, encoded by the
    mixed-radix number with the first label most significant, so the
    enumeration is lexicographic in the per-coordinate element indices.
    This is an oracle for desk-scale checking, not a production path;
    the universe cap guards against accidental blowup.
    """
    sig = fam.signature
    sizes = [fam.structures[l].universe_size for l in fam.labels]
    total = 1
    for n in sizes:
        total *= n
        if total > max_universe:
            raise ProductSizeError(
                f"product universe exceeds cap of {max_universe} tuples"
            )
    factors = [fam.structures[l] for l in fam.labels]
    k = len(factors)

    strides = [0] * k
    acc = 1
    for pos in range(k - 1, -1, -1):
        strides[pos] = acc
        acc *= sizes[pos]

    def encode(tup: Tuple[int, ...]) -> int:
        return sum(e * strides[pos] for pos, e in enumerate(tup))

    def decode(idx: int) -> Tuple[int, ...]:
        out = []
        for pos in range(k):
            out.append(idx // strides[pos] % sizes[pos])
        return tuple(out)

    relations = {}
    for name, arity in sig.relations.items():
        tables = [f.relations[name] for f in factors]
        tuples = set()
        for args in itertools.product(range(total), repeat=arity):
            decoded = [decode(a) for a in args]
            if all(
                tuple(decoded[j][pos] for j in range(arity)) in tables[pos]
                for pos in range(k)
            ):
                tuples.add(args)
        relations[name] = frozenset(tuples)

    functions = {}
    for name, arity in sig.functions.items():
        tables = [f.functions[name] for f in factors]
        table = {}
        for args in itertools.product(range(total), repeat=arity):
            decoded = [decode(a) for a in args]
            out = tuple(
                tables[pos][tuple(decoded[j][pos] for j in range(arity))]
                for pos in range(k)
            )
            table[args] = encode(out)
        functions[name] = table

    constants = {
        name: encode(tuple(f.constants[name] for f in factors))
        for name in sig.constants
    }

    return FiniteStructure(sig, total, relations, functions, constants)


# ---------------------------------------------------------------------------
# structure enumeration


def enumerate_structures(sig: Signature, max_size: int) -> Iterator[FiniteStructure]:
    """All structures over sig with universe size up to max_size.

    Deterministic order: sizes ascending; within a size, relation tables in
    binary-counter order over the sorted tuple list (sorted symbol order),
    then function tables in lexicographic order, then constants.  No
    quotienting by isomorphism.
    """
    if max_size < 1:
        raise StructureError("max_size must be at least 1")
    rel_names = sorted(sig.relations)
    fun_names = sorted(sig.functions)
    con_names = sorted(sig.constants)
    for n in range(1, max_size + 1):
        rel_spaces: List[List[FrozenSet[Tuple[int, ...]]]] = []
        for name in rel_names:
            tuples = sorted(itertools.product(range(n), repeat=sig.relations[name]))
            subsets = []
            for mask in range(2 ** len(tuples)):
                subsets.append(
                    frozenset(t for pos, t in enumerate(tuples) if mask >> pos & 1)
                )
            rel_spaces.append(subsets)
        fun_spaces: List[List[Dict[Tuple[int, ...], int]]] = []
        for name in fun_names:
            domain = sorted(itertools.product(range(n), repeat=sig.functions[name]))
            tables = []
            for values in itertools.product(range(n), repeat=len(domain)):
                tables.append(dict(zip(domain, values)))
            fun_spaces.append(tables)
        con_space = list(itertools.product(range(n), repeat=len(con_names)))
        for rels in itertools.product(*rel_spaces) if rel_spaces else [()]:
            for funs in itertools.product(*fun_spaces) if fun_spaces else [()]:
                for cons in con_space if con_names else [()]:
                    yield FiniteStructure(
                        sig,
                        n,
                        dict(zip(rel_names, rels)),
                        dict(zip(fun_names, funs)),
                        dict(zip(con_names, cons)),
                    )
