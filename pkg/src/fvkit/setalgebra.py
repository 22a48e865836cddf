"""The Boolean-algebra sort over the powerset of an index set.

Set terms use the lattice operations (meet, join, complement) plus the
Boolean-ring operations (ring sum, ring product); formulas add the
cardinality predicates C[j] ("contains at least j elements"), term
equality, connectives and set-sort quantifiers.

Two evaluation devices coexist and are cross-checked by the test suite:

* `eval_enumeration`: reference semantics, quantifiers range over all
  subsets of a small finite index set;
* `eval_profile`: evaluation over capped Venn-region counts, the engine
  behind quantifier elimination and the cardinality-condition extraction.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

from .errors import (
    CapError,
    EnumerationLimitError,
    EvaluationError,
    NonRingTermError,
    ParseError,
    SkolemSpaceError,
)

DEFAULT_ENUMERATION_LIMIT = 12
DEFAULT_SKOLEM_BUDGET = 200_000


# ---------------------------------------------------------------------------
# terms


class SetTerm:
    pass


@dataclass(frozen=True)
class SVar(SetTerm):
    name: str


@dataclass(frozen=True)
class Zero(SetTerm):
    pass


@dataclass(frozen=True)
class One(SetTerm):
    pass


@dataclass(frozen=True)
class Meet(SetTerm):
    left: SetTerm
    right: SetTerm


@dataclass(frozen=True)
class Join(SetTerm):
    left: SetTerm
    right: SetTerm


@dataclass(frozen=True)
class Comp(SetTerm):
    sub: SetTerm


@dataclass(frozen=True)
class RingSum(SetTerm):
    left: SetTerm
    right: SetTerm


@dataclass(frozen=True)
class RingProd(SetTerm):
    left: SetTerm
    right: SetTerm


# ---------------------------------------------------------------------------
# formulas


class SetFormula:
    pass


@dataclass(frozen=True)
class STrue(SetFormula):
    pass


@dataclass(frozen=True)
class SFalse(SetFormula):
    pass


@dataclass(frozen=True)
class CAtLeast(SetFormula):
    """C[j](term): the term denotes a set with at least j elements."""

    threshold: int
    term: SetTerm

    def __post_init__(self):
        if self.threshold < 0:
            raise ValueError("C subscript must be nonnegative")


@dataclass(frozen=True)
class TermEq(SetFormula):
    left: SetTerm
    right: SetTerm


@dataclass(frozen=True)
class SNot(SetFormula):
    sub: SetFormula


@dataclass(frozen=True)
class SAnd(SetFormula):
    left: SetFormula
    right: SetFormula


@dataclass(frozen=True)
class SOr(SetFormula):
    left: SetFormula
    right: SetFormula


@dataclass(frozen=True)
class SetExists(SetFormula):
    var: str
    body: SetFormula


@dataclass(frozen=True)
class SetForall(SetFormula):
    var: str
    body: SetFormula


def sand_all(items: Sequence[SetFormula]) -> SetFormula:
    items = [f for f in items if not isinstance(f, STrue)]
    if not items:
        return STrue()
    out = items[0]
    for f in items[1:]:
        out = SAnd(out, f)
    return out


def sor_all(items: Sequence[SetFormula]) -> SetFormula:
    items = [f for f in items if not isinstance(f, SFalse)]
    if not items:
        return SFalse()
    out = items[0]
    for f in items[1:]:
        out = SOr(out, f)
    return out


def term_set_vars(t: SetTerm) -> FrozenSet[str]:
    if isinstance(t, SVar):
        return frozenset((t.name,))
    if isinstance(t, (Zero, One)):
        return frozenset()
    if isinstance(t, Comp):
        return term_set_vars(t.sub)
    if isinstance(t, (Meet, Join, RingSum, RingProd)):
        return term_set_vars(t.left) | term_set_vars(t.right)
    raise TypeError(f"not a set term: {t!r}")


def set_free_vars(f: SetFormula) -> FrozenSet[str]:
    if isinstance(f, (STrue, SFalse)):
        return frozenset()
    if isinstance(f, CAtLeast):
        return term_set_vars(f.term)
    if isinstance(f, TermEq):
        return term_set_vars(f.left) | term_set_vars(f.right)
    if isinstance(f, SNot):
        return set_free_vars(f.sub)
    if isinstance(f, (SAnd, SOr)):
        return set_free_vars(f.left) | set_free_vars(f.right)
    if isinstance(f, (SetExists, SetForall)):
        return set_free_vars(f.body) - {f.var}
    raise TypeError(f"not a set formula: {f!r}")


def substitute_set_vars(f: SetFormula, mapping: Mapping[str, SetTerm]) -> SetFormula:
    """Replace free variables by terms; bound names must not occur in the
    replacement terms (decomposition guarantees this by fresh naming)."""

    def in_term(t: SetTerm, env: Mapping[str, SetTerm]) -> SetTerm:
        if isinstance(t, SVar):
            return env.get(t.name, t)
        if isinstance(t, (Zero, One)):
            return t
        if isinstance(t, Comp):
            return Comp(in_term(t.sub, env))
        return type(t)(in_term(t.left, env), in_term(t.right, env))

    def walk(g: SetFormula, env: Mapping[str, SetTerm]) -> SetFormula:
        if isinstance(g, (STrue, SFalse)):
            return g
        if isinstance(g, CAtLeast):
            return CAtLeast(g.threshold, in_term(g.term, env))
        if isinstance(g, TermEq):
            return TermEq(in_term(g.left, env), in_term(g.right, env))
        if isinstance(g, SNot):
            return SNot(walk(g.sub, env))
        if isinstance(g, (SAnd, SOr)):
            return type(g)(walk(g.left, env), walk(g.right, env))
        if isinstance(g, (SetExists, SetForall)):
            for term in env.values():
                if g.var in term_set_vars(term):
                    raise EvaluationError(
                        f"substitution would capture {g.var}"
                    )
            env2 = {k: v for k, v in env.items() if k != g.var}
            return type(g)(g.var, walk(g.body, env2))
        raise TypeError(f"not a set formula: {g!r}")

    return walk(f, dict(mapping))


def max_c_index(f: SetFormula) -> int:
    if isinstance(f, CAtLeast):
        return f.threshold
    if isinstance(f, SNot):
        return max_c_index(f.sub)
    if isinstance(f, (SAnd, SOr)):
        return max(max_c_index(f.left), max_c_index(f.right))
    if isinstance(f, (SetExists, SetForall)):
        return max_c_index(f.body)
    return 0


def count_set_quantifiers(f: SetFormula) -> int:
    if isinstance(f, SNot):
        return count_set_quantifiers(f.sub)
    if isinstance(f, (SAnd, SOr)):
        return count_set_quantifiers(f.left) + count_set_quantifiers(f.right)
    if isinstance(f, (SetExists, SetForall)):
        return 1 + count_set_quantifiers(f.body)
    return 0


def cap_bound(f: SetFormula) -> int:
    """Region-count cap that makes profile evaluation exact for f."""
    return max_c_index(f) + count_set_quantifiers(f) + 1


# ---------------------------------------------------------------------------
# serialization


def serialize_set_term(t: SetTerm) -> str:
    if isinstance(t, SVar):
        return t.name
    if isinstance(t, Zero):
        return "0"
    if isinstance(t, One):
        return "1"
    if isinstance(t, Comp):
        sub = serialize_set_term(t.sub)
        if isinstance(t.sub, (SVar, Zero, One, Comp)):
            return f"~{sub}"
        return f"~({sub})"
    ops = {Meet: "&", Join: "|", RingSum: "(+)", RingProd: "(.)"}
    op = ops[type(t)]
    return f"({serialize_set_term(t.left)} {op} {serialize_set_term(t.right)})"


def serialize_set_formula(f: SetFormula) -> str:
    if isinstance(f, STrue):
        return "true"
    if isinstance(f, SFalse):
        return "false"
    if isinstance(f, CAtLeast):
        return f"C[{f.threshold}]({serialize_set_term(f.term)})"
    if isinstance(f, TermEq):
        return f"{serialize_set_term(f.left)} == {serialize_set_term(f.right)}"
    if isinstance(f, SNot):
        sub = serialize_set_formula(f.sub)
        if isinstance(f.sub, (SetExists, SetForall)):
            sub = f"({sub})"
        return f"!!{sub}"
    if isinstance(f, SAnd):
        return f"({_set_operand(f.left)} && {_set_operand(f.right)})"
    if isinstance(f, SOr):
        return f"({_set_operand(f.left)} || {_set_operand(f.right)})"
    if isinstance(f, SetExists):
        return f"setexists {f.var}. {serialize_set_formula(f.body)}"
    if isinstance(f, SetForall):
        return f"setforall {f.var}. {serialize_set_formula(f.body)}"
    raise TypeError(f"not a set formula: {f!r}")


def _set_operand(f: SetFormula) -> str:
    text = serialize_set_formula(f)
    if isinstance(f, (SetExists, SetForall)):
        return f"({text})"
    return text


# ---------------------------------------------------------------------------
# parsing

_SET_SYMBOLS = [
    "(+)", "(.)", "==", "&&", "||", "!!", "(", ")", "[", "]", ".", ",", "~", "&", "|",
]


def _set_tokenize(text: str) -> List[tuple]:
    tokens = []
    line, col = 1, 1
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if ch == "#":
            while i < n and text[i] != "\n":
                i += 1
            continue
        if ch.isdigit():
            start = i
            while i < n and text[i].isdigit():
                i += 1
            tokens.append(("number", text[start:i], line, col))
            col += i - start
            continue
        if ch.isalpha() or ch == "_":
            start = i
            while i < n and (text[i].isalnum() or text[i] == "_"):
                i += 1
            tokens.append(("name", text[start:i], line, col))
            col += i - start
            continue
        for sym in _SET_SYMBOLS:
            if text.startswith(sym, i):
                tokens.append(("symbol", sym, line, col))
                i += len(sym)
                col += len(sym)
                break
        else:
            raise ParseError(f"unexpected character {ch!r}", line, col)
    tokens.append(("end", "", line, col))
    return tokens


class _SetParser:
    def __init__(self, text: str):
        self.tokens = _set_tokenize(text)
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos]

    def next(self):
        tok = self.tokens[self.pos]
        if tok[0] != "end":
            self.pos += 1
        return tok

    def at(self, text: str) -> bool:
        return self.peek()[1] == text

    def expect(self, text: str):
        kind, tok, line, col = self.peek()
        if tok != text:
            raise ParseError(f"expected {text!r}, found {tok or 'end of input'!r}", line, col)
        return self.next()

    def fail(self, message: str):
        _, _, line, col = self.peek()
        raise ParseError(message, line, col)

    def parse(self) -> SetFormula:
        f = self.formula()
        if self.peek()[0] != "end":
            self.fail("trailing input")
        return f

    def formula(self) -> SetFormula:
        kind, tok, line, col = self.peek()
        if tok in ("setexists", "setforall"):
            self.next()
            vk, var, vl, vc = self.peek()
            if vk != "name":
                self.fail("expected a set variable")
            self.next()
            self.expect(".")
            body = self.formula()
            return (SetExists if tok == "setexists" else SetForall)(var, body)
        return self.disjunction()

    def disjunction(self) -> SetFormula:
        f = self.conjunction()
        while self.at("||"):
            self.next()
            f = SOr(f, self.conjunction())
        return f

    def conjunction(self) -> SetFormula:
        f = self.negation()
        while self.at("&&"):
            self.next()
            f = SAnd(f, self.negation())
        return f

    def negation(self) -> SetFormula:
        if self.at("!!"):
            self.next()
            return SNot(self.negation())
        return self.atom()

    def atom(self) -> SetFormula:
        kind, tok, line, col = self.peek()
        if tok == "true":
            self.next()
            return STrue()
        if tok == "false":
            self.next()
            return SFalse()
        if tok == "C":
            self.next()
            self.expect("[")
            nk, num, nl, nc = self.peek()
            if nk != "number":
                self.fail("expected a C subscript")
            self.next()
            j = int(num)
            if j < 1:
                raise ParseError("C subscript must be positive", nl, nc)
            self.expect("]")
            self.expect("(")
            term = self.term()
            self.expect(")")
            return CAtLeast(j, term)
        if tok in ("setexists", "setforall"):
            return self.formula()
        if tok == "(":
            # either a parenthesized formula or the left term of an equality
            saved = self.pos
            try:
                self.next()
                f = self.formula()
                self.expect(")")
                if self.at("=="):
                    raise ParseError("reparse as term", line, col)
                return f
            except ParseError:
                self.pos = saved
        left = self.term()
        self.expect("==")
        right = self.term()
        return TermEq(left, right)

    def term(self) -> SetTerm:
        f = self.term_factor()
        while True:
            kind, tok, _, _ = self.peek()
            if tok in ("|", "(+)"):
                self.next()
                right = self.term_factor()
                f = Join(f, right) if tok == "|" else RingSum(f, right)
            else:
                return f

    def term_factor(self) -> SetTerm:
        f = self.term_atom()
        while True:
            kind, tok, _, _ = self.peek()
            if tok in ("&", "(.)"):
                self.next()
                right = self.term_atom()
                f = Meet(f, right) if tok == "&" else RingProd(f, right)
            else:
                return f

    def term_atom(self) -> SetTerm:
        kind, tok, line, col = self.peek()
        if tok == "~":
            self.next()
            return Comp(self.term_atom())
        if kind == "number":
            self.next()
            if tok == "0":
                return Zero()
            if tok == "1":
                return One()
            raise ParseError(f"unexpected number {tok}", line, col)
        if kind == "name" and tok not in ("true", "false", "C", "setexists", "setforall"):
            self.next()
            return SVar(tok)
        if tok == "(":
            self.next()
            t = self.term()
            self.expect(")")
            return t
        raise ParseError(f"expected a set term, found {tok!r}", line, col)


def parse_set_formula(text: str) -> SetFormula:
    """Parse the set-sort grammar; bound variables are freshly renamed."""
    f = _SetParser(text).parse()
    return _alpha_rename_set(f)


def _alpha_rename_set(f: SetFormula) -> SetFormula:
    taken = set(set_free_vars(f))
    counter = [0]

    def fresh() -> str:
        while True:
            name = f"z{counter[0]}"
            counter[0] += 1
            if name not in taken:
                return name

    def walk(g: SetFormula, env: Dict[str, str]) -> SetFormula:
        if isinstance(g, (STrue, SFalse)):
            return g
        if isinstance(g, (CAtLeast, TermEq)):
            mapping = {old: SVar(new) for old, new in env.items()}
            return substitute_set_vars(g, mapping)
        if isinstance(g, SNot):
            return SNot(walk(g.sub, env))
        if isinstance(g, (SAnd, SOr)):
            return type(g)(walk(g.left, env), walk(g.right, env))
        if isinstance(g, (SetExists, SetForall)):
            name = fresh()
            return type(g)(name, walk(g.body, {**env, g.var: name}))
        raise TypeError(f"not a set formula: {g!r}")

    return walk(f, {})


# ---------------------------------------------------------------------------
# reference semantics: enumeration over all subsets


def _term_mask(t: SetTerm, env: Mapping[str, int], full: int) -> int:
    if isinstance(t, SVar):
        try:
            return env[t.name]
        except KeyError:
            raise EvaluationError(f"unbound set variable {t.name}") from None
    if isinstance(t, Zero):
        return 0
    if isinstance(t, One):
        return full
    if isinstance(t, Comp):
        return full & ~_term_mask(t.sub, env, full)
    left = _term_mask(t.left, env, full)
    right = _term_mask(t.right, env, full)
    if isinstance(t, Meet):
        return left & right
    if isinstance(t, Join):
        return left | right
    if isinstance(t, RingSum):
        return left ^ right
    if isinstance(t, RingProd):
        return left & right
    raise TypeError(f"not a set term: {t!r}")


def _enum_naive(f: SetFormula, env: Dict[str, int], full: int) -> bool:
    if isinstance(f, STrue):
        return True
    if isinstance(f, SFalse):
        return False
    if isinstance(f, CAtLeast):
        return _term_mask(f.term, env, full).bit_count() >= f.threshold
    if isinstance(f, TermEq):
        return _term_mask(f.left, env, full) == _term_mask(f.right, env, full)
    if isinstance(f, SNot):
        return not _enum_naive(f.sub, env, full)
    if isinstance(f, SAnd):
        return _enum_naive(f.left, env, full) and _enum_naive(f.right, env, full)
    if isinstance(f, SOr):
        return _enum_naive(f.left, env, full) or _enum_naive(f.right, env, full)
    if isinstance(f, (SetExists, SetForall)):
        want = isinstance(f, SetExists)
        for mask in range(full + 1):
            env[f.var] = mask
            got = _enum_naive(f.body, env, full)
            del env[f.var]
            if got == want:
                return want
        return not want
    raise TypeError(f"not a set formula: {f!r}")


def _flatten(f: SetFormula, cls) -> List[SetFormula]:
    if isinstance(f, cls):
        return _flatten(f.left, cls) + _flatten(f.right, cls)
    return [f]


def _enum_scheduled(f: SetFormula, env: Dict[str, int], full: int, fv_cache: dict) -> bool:
    """Same semantics as the naive recursion, but quantifier blocks assign
    one variable at a time and check each conjunct (for exists blocks;
    disjunct for forall blocks) as soon as its variables are bound, which
    prunes the subset search enough to handle long quantifier prefixes."""

    def freevars(g: SetFormula) -> FrozenSet[str]:
        got = fv_cache.get(id(g))
        if got is None:
            got = set_free_vars(g)
            fv_cache[id(g)] = got
        return got

    def ev(g: SetFormula) -> bool:
        if isinstance(g, STrue):
            return True
        if isinstance(g, SFalse):
            return False
        if isinstance(g, CAtLeast):
            return _term_mask(g.term, env, full).bit_count() >= g.threshold
        if isinstance(g, TermEq):
            return _term_mask(g.left, env, full) == _term_mask(g.right, env, full)
        if isinstance(g, SNot):
            return not ev(g.sub)
        if isinstance(g, SAnd):
            return ev(g.left) and ev(g.right)
        if isinstance(g, SOr):
            return ev(g.left) or ev(g.right)
        if isinstance(g, (SetExists, SetForall)):
            return block(g)
        raise TypeError(f"not a set formula: {g!r}")

    def block(g: SetFormula) -> bool:
        kind = type(g)
        exists = kind is SetExists
        block_vars: List[str] = []
        body = g
        while isinstance(body, kind):
            block_vars.append(body.var)
            body = body.body
        items = _flatten(body, SAnd if exists else SOr)
        positions = {v: i for i, v in enumerate(block_vars)}
        scheduled: List[List[SetFormula]] = [[] for _ in block_vars]
        upfront: List[SetFormula] = []
        for item in items:
            depths = [positions[v] for v in freevars(item) if v in positions]
            if depths:
                scheduled[max(depths)].append(item)
            else:
                upfront.append(item)
        for item in upfront:
            if ev(item) != exists:
                # a false conjunct sinks the exists; a true disjunct settles
                # the forall
                return not exists
        def level(d: int) -> bool:
            if d == len(block_vars):
                return exists
            var = block_vars[d]
            for mask in range(full + 1):
                env[var] = mask
                if exists:
                    ok = all(ev(item) for item in scheduled[d])
                    if ok and level(d + 1):
                        del env[var]
                        return True
                else:
                    fired = any(ev(item) for item in scheduled[d])
                    if not fired and not level(d + 1):
                        del env[var]
                        return False
                del env[var]
            return not exists

        return level(0)

    return ev(f)


def eval_enumeration(
    psi: SetFormula,
    assignment: Mapping[str, Iterable],
    index_set: Sequence,
    limit: int = DEFAULT_ENUMERATION_LIMIT,
    naive: bool = False,
) -> bool:
    """Truth of psi in the powerset algebra of the finite index set.

    Quantifiers range over all subsets.  `naive` forces the plain
    recursion; the default schedules quantifier blocks but is semantically
    identical.
    """
    labels = list(index_set)
    if len(set(labels)) != len(labels):
        raise EvaluationError("index set labels must be distinct")
    if len(labels) > limit:
        raise EnumerationLimitError(
            f"index set of size {len(labels)} exceeds the enumeration limit {limit}"
        )
    position = {label: i for i, label in enumerate(labels)}
    full = (1 << len(labels)) - 1
    env: Dict[str, int] = {}
    for var, subset in assignment.items():
        mask = 0
        for label in subset:
            if label not in position:
                raise EvaluationError(f"{label!r} is not in the index set")
            mask |= 1 << position[label]
        env[var] = mask
    missing = set_free_vars(psi) - set(env)
    if missing:
        raise EvaluationError(f"unbound set variables: {sorted(missing)}")
    if naive:
        return _enum_naive(psi, env, full)
    return _enum_scheduled(psi, env, full, {})


# ---------------------------------------------------------------------------
# F2 linear polynomials


@dataclass(frozen=True)
class LinearPolynomial:
    """Ring-normal form epsilon_0*y_0 + ... + epsilon_m*y_m + constant."""

    coefficients: Tuple[int, ...]
    constant: int

    def __post_init__(self):
        if self.constant not in (0, 1):
            raise ValueError("constant term must be 0 or 1")
        if any(c not in (0, 1) for c in self.coefficients):
            raise ValueError("coefficients must be in F2")

    @property
    def support(self) -> Tuple[int, ...]:
        return tuple(j for j, c in enumerate(self.coefficients) if c)

    def to_set_term(self) -> SetTerm:
        parts: List[SetTerm] = [SVar(f"y{j}") for j in self.support]
        if self.constant:
            parts.append(One())
        if not parts:
            return Zero()
        out = parts[0]
        for p in parts[1:]:
            out = RingSum(out, p)
        return out


def _var_index(name: str) -> Optional[int]:
    if name.startswith("y") and name[1:].isdigit():
        return int(name[1:])
    return None


def to_linear_polynomial(t: SetTerm, num_vars: Optional[int] = None) -> LinearPolynomial:
    """Normalize a ring-fragment term (variables y0..ym, 0, 1, ring sum,
    ring product) into an F2 linear polynomial.

    Idempotent powers collapse (y*y = y); a surviving product of distinct
    variables is not linear and is rejected, as is any lattice operator.
    """

    def expand(term: SetTerm) -> FrozenSet[FrozenSet[int]]:
        # XOR-of-monomials normal form; a monomial is a set of variable
        # indices, the empty monomial is the constant 1
        if isinstance(term, SVar):
            idx = _var_index(term.name)
            if idx is None:
                raise NonRingTermError(
                    f"variable {term.name} is not of the form y<j>"
                )
            return frozenset((frozenset((idx,)),))
        if isinstance(term, Zero):
            return frozenset()
        if isinstance(term, One):
            return frozenset((frozenset(),))
        if isinstance(term, RingSum):
            return expand(term.left) ^ expand(term.right)
        if isinstance(term, RingProd):
            left = expand(term.left)
            right = expand(term.right)
            out: set = set()
            for a in left:
                for b in right:
                    mono = a | b
                    if mono in out:
                        out.discard(mono)
                    else:
                        out.add(mono)
            return frozenset(out)
        raise NonRingTermError(
            f"{type(term).__name__} is outside the ring fragment"
        )

    monomials = expand(t)
    constant = 1 if frozenset() in monomials else 0
    indices = []
    for mono in monomials:
        if len(mono) > 1:
            raise NonRingTermError(
                "product of distinct variables has no linear normal form"
            )
        if len(mono) == 1:
            indices.append(next(iter(mono)))
    size = max(
        [num_vars if num_vars is not None else 0]
        + [idx + 1 for idx in indices]
    )
    coeffs = [0] * size
    for idx in indices:
        coeffs[idx] = 1
    return LinearPolynomial(tuple(coeffs), constant)


# ---------------------------------------------------------------------------
# reduction of cardinality atoms over a partition (Cases 1 and 2)


@dataclass(frozen=True)
class CardinalityCondition:
    """C[threshold] applied to a ring sum of partition cells, or its negation."""

    threshold: int
    cells: FrozenSet[int]
    negated: bool = False

    def to_set_formula(self) -> SetFormula:
        parts: List[SetTerm] = [SVar(f"y{j}") for j in sorted(self.cells)]
        if not parts:
            term: SetTerm = Zero()
        else:
            term = parts[0]
            for p in parts[1:]:
                term = RingSum(term, p)
        body: SetFormula = CAtLeast(self.threshold, term) if self.threshold else STrue()
        return SNot(body) if self.negated else body


def _case1(threshold: int, support: Sequence[int]) -> SetFormula:
    """C[q] of a ring sum of disjoint cells as a disjunction over the
    compositions of q across the cells; C[0] is absorbed as truth."""
    if threshold == 0:
        return STrue()
    cells = list(support)
    if not cells:
        return SFalse()
    disjuncts: List[SetFormula] = []
    for split in itertools.product(range(threshold + 1), repeat=len(cells)):
        if sum(split) != threshold:
            continue
        atoms = [
            CAtLeast(lam, SVar(f"y{cell}"))
            for lam, cell in zip(split, cells)
            if lam > 0
        ]
        disjuncts.append(sand_all(atoms))
    return sor_all(disjuncts)


def reduce_to_cardinality_conditions(
    threshold: int,
    poly: LinearPolynomial,
    m: int,
    negated: bool = False,
) -> SetFormula:
    """Rewrite C[q](f) for a linear polynomial f evaluated at a partition
    y0..ym into a Boolean combination of single-cell cardinality atoms.

    Covers the constant-free case (composition disjunction), the constant
    polynomial 1 (kept as C[q](1), a pure size condition on the index set)
    and the complement case, which flips to the remaining cells.  Output is
    equivalent to the input atom on every partition assignment.
    """
    if len(poly.coefficients) > m + 1:
        raise NonRingTermError(
            f"polynomial mentions y{len(poly.coefficients) - 1} beyond m={m}"
        )
    support = list(poly.support)
    if poly.constant == 0:
        out = _case1(threshold, support)
    elif not support:
        out = CAtLeast(threshold, One()) if threshold else STrue()
    else:
        flipped = [j for j in range(m + 1) if j not in set(support)]
        out = _case1(threshold, flipped)
    return SNot(out) if negated else out


# ---------------------------------------------------------------------------
# region profiles


class _Saturated:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "SATURATED"


SATURATED = _Saturated()

Count = Union[int, _Saturated]


@dataclass(frozen=True)
class RegionProfile:
    """Capped cardinalities of the Venn regions spanned by some variables.

    Region patterns are bitmasks over `variables` (bit i set means inside
    variable i); absent patterns have count zero.  A count above the cap is
    recorded as SATURATED.
    """

    variables: Tuple[str, ...]
    counts: Mapping[int, Count]
    cap: int

    def __post_init__(self):
        object.__setattr__(
            self,
            "counts",
            {
                p: c
                for p, c in self.counts.items()
                if c is SATURATED or c > 0
            },
        )
        for p, c in self.counts.items():
            if not 0 <= p < (1 << len(self.variables)):
                raise ValueError(f"region pattern {p} out of range")
            if c is not SATURATED and (not isinstance(c, int) or c < 0):
                raise ValueError(f"bad region count {c!r}")
            if c is not SATURATED and c > self.cap:
                raise ValueError("exact count above the cap; use SATURATED")


def profile_of(
    assignment: Mapping[str, Iterable],
    index_set: Sequence,
    cap: int,
    variables: Optional[Sequence[str]] = None,
) -> RegionProfile:
    """Abstract an assignment of subsets into its capped region profile."""
    if variables is None:
        variables = sorted(assignment)
    variables = tuple(variables)
    sets = {v: frozenset(assignment[v]) for v in variables}
    counts: Dict[int, int] = {}
    for label in index_set:
        pattern = 0
        for i, v in enumerate(variables):
            if label in sets[v]:
                pattern |= 1 << i
        counts[pattern] = counts.get(pattern, 0) + 1
    capped: Dict[int, Count] = {
        p: (c if c <= cap else SATURATED) for p, c in counts.items()
    }
    return RegionProfile(variables, capped, cap)


def _term_true_at(t: SetTerm, pattern: int, env: Mapping[str, int]) -> bool:
    if isinstance(t, SVar):
        try:
            return bool(pattern >> env[t.name] & 1)
        except KeyError:
            raise EvaluationError(f"unbound set variable {t.name}") from None
    if isinstance(t, Zero):
        return False
    if isinstance(t, One):
        return True
    if isinstance(t, Comp):
        return not _term_true_at(t.sub, pattern, env)
    left = _term_true_at(t.left, pattern, env)
    right = _term_true_at(t.right, pattern, env)
    if isinstance(t, Meet) or isinstance(t, RingProd):
        return left and right
    if isinstance(t, Join):
        return left or right
    if isinstance(t, RingSum):
        return left != right
    raise TypeError(f"not a set term: {t!r}")


class _ProfileEvaluator:
    """Evaluation over sparse capped region counts.

    State is (number of active bits, dict pattern -> count); splitting on a
    set quantifier refines every nonzero region into an in/out pair.
    Saturated counts split into the finitely many saturating shapes, which
    keeps the search finite; quantifier blocks schedule their conjuncts at
    the earliest depth where the variables are bound, so the subset
    constraints of decomposition formulas prune the split search hard.
    """

    def __init__(self, cap: int):
        self.cap = cap
        self.memo: Dict[tuple, bool] = {}
        self._fv: Dict[int, FrozenSet[str]] = {}

    def freevars(self, f: SetFormula) -> FrozenSet[str]:
        got = self._fv.get(id(f))
        if got is None:
            got = set_free_vars(f)
            self._fv[id(f)] = got
        return got

    def _splits(self, count: Count) -> List[Tuple[Count, Count]]:
        # (kept outside z, moved inside z); saturated absorbs addition and
        # splits into the saturating shapes only
        if count is SATURATED:
            out: List[Tuple[Count, Count]] = [
                (SATURATED, c) for c in range(self.cap + 1)
            ]
            out += [(c, SATURATED) for c in range(self.cap + 1)]
            out.append((SATURATED, SATURATED))
            return out
        return [(count - moved, moved) for moved in range(count + 1)]

    def eval(self, f: SetFormula, nvars: int, counts: Dict[int, Count], env: Dict[str, int]) -> bool:
        if isinstance(f, STrue):
            return True
        if isinstance(f, SFalse):
            return False
        if isinstance(f, CAtLeast):
            if f.threshold == 0:
                return True
            if f.threshold > self.cap:
                raise CapError(
                    f"C[{f.threshold}] cannot be decided at cap {self.cap}"
                )
            total = 0
            for pattern, count in counts.items():
                if _term_true_at(f.term, pattern, env):
                    total += self.cap if count is SATURATED else count
                    if total >= f.threshold:
                        return True
            return False
        if isinstance(f, TermEq):
            for pattern, _count in counts.items():
                if _term_true_at(f.left, pattern, env) != _term_true_at(
                    f.right, pattern, env
                ):
                    return False
            return True
        if isinstance(f, SNot):
            return not self.eval(f.sub, nvars, counts, env)
        if isinstance(f, SAnd):
            return self.eval(f.left, nvars, counts, env) and self.eval(
                f.right, nvars, counts, env
            )
        if isinstance(f, SOr):
            return self.eval(f.left, nvars, counts, env) or self.eval(
                f.right, nvars, counts, env
            )
        if isinstance(f, (SetExists, SetForall)):
            key = (
                id(f),
                nvars,
                frozenset(counts.items()),
                tuple(sorted((v, env[v]) for v in self.freevars(f))),
            )
            got = self.memo.get(key)
            if got is None:
                got = self._block(f, nvars, counts, env)
                self.memo[key] = got
            return got
        raise TypeError(f"not a set formula: {f!r}")

    def _block(self, f: SetFormula, nvars: int, counts: Dict[int, Count], env: Dict[str, int]) -> bool:
        kind = type(f)
        exists = kind is SetExists
        block_vars: List[str] = []
        body: SetFormula = f
        while isinstance(body, kind):
            block_vars.append(body.var)
            body = body.body
        items = _flatten(body, SAnd if exists else SOr)
        positions = {v: i for i, v in enumerate(block_vars)}
        scheduled: List[List[SetFormula]] = [[] for _ in block_vars]
        upfront: List[SetFormula] = []
        for item in items:
            depths = [positions[v] for v in self.freevars(item) if v in positions]
            if depths:
                scheduled[max(depths)].append(item)
            else:
                upfront.append(item)
        for item in upfront:
            if self.eval(item, nvars, counts, env) != exists:
                return not exists

        def level(d: int, cur: Dict[int, Count]) -> bool:
            if d == len(block_vars):
                return exists
            var = block_vars[d]
            bit = nvars + d
            env[var] = bit
            regions = sorted(cur.items(), key=lambda kv: kv[0])
            try:
                for assignment in self._region_splits(regions, bit):
                    if exists:
                        ok = all(
                            self.eval(item, bit + 1, assignment, env)
                            for item in scheduled[d]
                        )
                        if ok and level(d + 1, assignment):
                            return True
                    else:
                        fired = any(
                            self.eval(item, bit + 1, assignment, env)
                            for item in scheduled[d]
                        )
                        if not fired and not level(d + 1, assignment):
                            return False
                return not exists
            finally:
                del env[var]

        return level(0, dict(counts))

    def _region_splits(self, regions, bit: int):
        """All refinements of the nonzero regions along a new variable."""
        if not regions:
            yield {}
            return
        (pattern, count), rest = regions[0], regions[1:]
        for tail in self._region_splits(rest, bit):
            for kept, moved in self._splits(count):
                out = dict(tail)
                if kept is SATURATED or kept > 0:
                    out[pattern] = kept
                if moved is SATURATED or moved > 0:
                    out[pattern | (1 << bit)] = moved
                yield out


def eval_profile(psi: SetFormula, profile: RegionProfile) -> bool:
    """Truth of psi over a region profile; exact when the cap is at least
    cap_bound(psi)."""
    needed = cap_bound(psi)
    if profile.cap < needed:
        raise CapError(
            f"profile cap {profile.cap} below required bound {needed}"
        )
    missing = set_free_vars(psi) - set(profile.variables)
    if missing:
        raise EvaluationError(f"unbound set variables: {sorted(missing)}")
    env = {v: i for i, v in enumerate(profile.variables)}
    counts = dict(profile.counts)
    return _ProfileEvaluator(profile.cap).eval(psi, len(profile.variables), counts, env)


# ---------------------------------------------------------------------------
# cardinality conditions of a formula over partitions


@dataclass(frozen=True)
class SkolemCondition:
    """One (g, s) pair: exact cell sizes on s, lower bounds elsewhere."""

    g: Tuple[int, ...]
    s: FrozenSet[int]

    def matches(self, sizes: Sequence[int]) -> bool:
        if len(sizes) != len(self.g):
            raise ValueError("cell count mismatch")
        for j, size in enumerate(sizes):
            if j in self.s:
                if size != self.g[j]:
                    return False
            elif size < self.g[j]:
                return False
        return True

    @property
    def total(self) -> int:
        return sum(self.g)

    def sort_key(self):
        return (self.total, self.g, tuple(sorted(self.s)))


@dataclass(frozen=True)
class SkolemConditionSet:
    """Finitely many cardinality conditions plus the support bound."""

    cells: int
    conditions: Tuple[SkolemCondition, ...]
    bound: int

    @property
    def M(self) -> int:
        return len(self.conditions)

    def match(self, sizes: Sequence[int]) -> Optional[int]:
        for k, cond in enumerate(self.conditions):
            if cond.matches(sizes):
                return k
        return None


def _subsumed(a: SkolemCondition, b: SkolemCondition) -> bool:
    """Every size vector matching a also matches b."""
    for j in range(len(a.g)):
        if j in b.s:
            if j not in a.s or a.g[j] != b.g[j]:
                return False
        else:
            if a.g[j] < b.g[j]:
                return False
    return True


def normalize_conditions(
    conditions: Iterable[SkolemCondition],
) -> Tuple[SkolemCondition, ...]:
    """Canonical antichain: drop subsumed conditions and merge an exact
    count c with the adjacent lower bound c+1 into the lower bound c.
    The merges preserve the union of the match sets exactly."""
    pool = sorted(set(conditions), key=SkolemCondition.sort_key)
    changed = True
    while changed:
        changed = False
        # distinct conditions cannot subsume each other mutually, so this
        # keeps exactly the maximal ones
        kept = [
            cond
            for cond in pool
            if not any(other != cond and _subsumed(cond, other) for other in pool)
        ]
        if len(kept) != len(pool):
            changed = True
        pool = kept
        merged = None
        for a, b in itertools.combinations(pool, 2):
            for x, y in ((a, b), (b, a)):
                diff = [
                    j
                    for j in range(len(x.g))
                    if x.g[j] != y.g[j] or (j in x.s) != (j in y.s)
                ]
                if len(diff) != 1:
                    continue
                j = diff[0]
                if j in x.s and j not in y.s and y.g[j] == x.g[j] + 1:
                    merged = (a, b, SkolemCondition(tuple(
                        x.g[k] if k != j else x.g[j] for k in range(len(x.g))
                    ), y.s))
                    break
            if merged:
                break
        if merged:
            a, b, c = merged
            pool = [p for p in pool if p not in (a, b)] + [c]
            pool = sorted(set(pool), key=SkolemCondition.sort_key)
            changed = True
    return tuple(sorted(set(pool), key=SkolemCondition.sort_key))


def skolem_conditions(
    psi: SetFormula,
    m: Optional[int] = None,
    cap: Optional[int] = None,
    forced_empty: FrozenSet[int] = frozenset(),
    budget: int = DEFAULT_SKOLEM_BUDGET,
) -> SkolemConditionSet:
    """Extract the finitely many cardinality conditions that determine
    satisfaction of psi by a partition y0..ym of the index set.

    Enumerates all capped profiles over the cells (cells in `forced_empty`
    are pinned to zero, for callers that know those cells are unrealizable),
    keeps the accepted ones and normalizes the resulting conditions.  The
    contract: a partition Z0..Zm of a finite index set (with forced cells
    empty) satisfies psi iff some condition matches its cell sizes.
    """
    fv = set_free_vars(psi)
    indices = []
    for name in fv:
        idx = _var_index(name)
        if idx is None:
            raise EvaluationError(
                f"free variable {name} is not a partition cell y<j>"
            )
        indices.append(idx)
    inferred = max(indices) if indices else -1
    if m is None:
        m = inferred
    if inferred > m:
        raise EvaluationError(f"psi mentions y{inferred} beyond m={m}")
    cells = m + 1
    needed = cap_bound(psi)
    if cap is None:
        cap = needed
    if cap < needed:
        raise CapError(f"cap {cap} below required bound {needed}")
    if any(j < 0 or j >= cells for j in forced_empty):
        raise EvaluationError("forced_empty cell index out of range")
    free_cells = [j for j in range(cells) if j not in forced_empty]
    space = (cap + 2) ** len(free_cells)
    if space > budget:
        raise SkolemSpaceError(
            f"profile space of size {space} exceeds the budget {budget}"
        )
    variables = tuple(f"y{j}" for j in range(cells))
    values: List[Count] = list(range(cap + 1)) + [SATURATED]
    evaluator = _ProfileEvaluator(cap)
    env = {v: i for i, v in enumerate(variables)}
    accepted: List[SkolemCondition] = []
    for combo in itertools.product(values, repeat=len(free_cells)):
        sizes: List[Count] = [0] * cells
        for j, value in zip(free_cells, combo):
            sizes[j] = value
        counts: Dict[int, Count] = {}
        for j, value in enumerate(sizes):
            if value is SATURATED or value > 0:
                counts[1 << j] = value
        if not evaluator.eval(psi, cells, counts, env):
            continue
        g = tuple(cap if v is SATURATED else v for v in sizes)
        s = frozenset(j for j, v in enumerate(sizes) if v is not SATURATED)
        accepted.append(SkolemCondition(g, s))
    conditions = normalize_conditions(accepted)
    bound = max([0] + [c.total for c in conditions])
    return SkolemConditionSet(cells, conditions, bound)


def _render_condition(cond: SkolemCondition) -> SetFormula:
    atoms: List[SetFormula] = []
    for j in range(len(cond.g)):
        var = SVar(f"y{j}")
        g = cond.g[j]
        if j in cond.s:
            if g > 0:
                atoms.append(CAtLeast(g, var))
            atoms.append(SNot(CAtLeast(g + 1, var)))
        elif g > 0:
            atoms.append(CAtLeast(g, var))
    return sand_all(atoms)


def quantifier_eliminate(
    psi: SetFormula,
    m: Optional[int] = None,
    cap: Optional[int] = None,
    forced_empty: FrozenSet[int] = frozenset(),
    budget: int = DEFAULT_SKOLEM_BUDGET,
) -> SetFormula:
    """Quantifier-free equivalent of psi over partition assignments,
    rendered from the cardinality conditions (C[0] atoms are absorbed)."""
    conds = skolem_conditions(psi, m=m, cap=cap, forced_empty=forced_empty, budget=budget)
    return sor_all([_render_condition(c) for c in conds.conditions])
