"""The product decomposition: each formula gets an acceptable sequence,
a set-sort formula over the truth sets of a partition sequence that
characterizes truth in any product of structures over any index set.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, FrozenSet, List, Mapping, Sequence, Tuple

from .errors import CellCeilingError
from .logic import (
    And,
    Eq,
    Exists,
    Forall,
    Formula,
    Implies,
    Not,
    Or,
    Rel,
    Signature,
    enumerate_structures,
    free_vars,
    validate_formula,
)
from .logic import _Evaluator
from .setalgebra import (
    Comp,
    Join,
    Meet,
    One,
    RingSum,
    SAnd,
    SetExists,
    SetFormula,
    SNot,
    SOr,
    STrue,
    SVar,
    TermEq,
    Zero,
    set_free_vars,
    substitute_set_vars,
)

DEFAULT_CELL_CEILING = 4096


@dataclass(frozen=True)
class PartitionSequence:
    """Formulas that hold jointly exhaustively and pairwise exclusively in
    every structure, under every assignment; all share one free tuple."""

    cells: Tuple[Formula, ...]

    def __post_init__(self):
        object.__setattr__(self, "cells", tuple(self.cells))
        if not self.cells:
            raise ValueError("a partition sequence has at least one cell")
        frees = {free_vars(c) for c in self.cells}
        if len(frees) > 1:
            raise ValueError("cells must share one free-variable tuple")

    def __len__(self):
        return len(self.cells)

    @property
    def free_variables(self) -> FrozenSet[str]:
        return free_vars(self.cells[0])


@dataclass(frozen=True)
class AcceptableSequence:
    """A set-sort formula over y0..ym paired with an m+1 cell partition.

    `known_empty` records cells whose truth set is empty in every family by
    construction (e.g. the all-negative combination of an exists step);
    they are kept in the partition, the flag is metadata for the witness
    machinery.
    """

    psi: SetFormula
    partition: PartitionSequence
    known_empty: FrozenSet[int] = frozenset()

    def __post_init__(self):
        names = {f"y{j}" for j in range(len(self.partition))}
        extra = set_free_vars(self.psi) - names
        if extra:
            raise ValueError(f"psi mentions unknown cells: {sorted(extra)}")
        if any(j < 0 or j >= len(self.partition) for j in self.known_empty):
            raise ValueError("known_empty cell index out of range")

    @property
    def cells(self) -> Tuple[Formula, ...]:
        return self.partition.cells


def compile_connectives(f: Formula) -> Formula:
    """Rewrite implications and universals (to not/or and not-exists-not),
    keeping the decomposition recursion to four cases."""
    if isinstance(f, (Eq, Rel)):
        return f
    if isinstance(f, Not):
        return Not(compile_connectives(f.sub))
    if isinstance(f, And):
        return And(compile_connectives(f.left), compile_connectives(f.right))
    if isinstance(f, Or):
        return Or(compile_connectives(f.left), compile_connectives(f.right))
    if isinstance(f, Implies):
        return Or(Not(compile_connectives(f.left)), compile_connectives(f.right))
    if isinstance(f, Exists):
        return Exists(f.var, compile_connectives(f.body))
    if isinstance(f, Forall):
        return Not(Exists(f.var, Not(compile_connectives(f.body))))
    raise TypeError(f"not a formula: {f!r}")


def refine(
    p: PartitionSequence, q: PartitionSequence
) -> Tuple[PartitionSequence, Tuple[Tuple[int, ...], ...], Tuple[Tuple[int, ...], ...]]:
    """Pairwise conjunctions in row-major order, with the index maps from
    each original cell to its refined cells.  No pruning of unsatisfiable
    combinations."""
    b = len(q)
    cells = [And(pc, qc) for pc in p.cells for qc in q.cells]
    p_map = tuple(
        tuple(j * b + k for k in range(b)) for j in range(len(p))
    )
    q_map = tuple(
        tuple(j * b + k for j in range(len(p))) for k in range(b)
    )
    return PartitionSequence(tuple(cells)), p_map, q_map


def sigma_cells(inner: Sequence[Formula], var: str) -> List[Formula]:
    """Complete Boolean combinations of the realizability facts
    "some element satisfies inner cell j", one per subset mask."""
    witnessed = [Exists(var, theta) for theta in inner]
    cells = []
    for mask in range(1 << len(inner)):
        literals = [
            w if mask >> j & 1 else Not(w) for j, w in enumerate(witnessed)
        ]
        cell = literals[0]
        for lit in literals[1:]:
            cell = And(cell, lit)
        cells.append(cell)
    return cells


def _join_vars(indices: Sequence[int]) -> SetFormula:
    out = SVar(f"y{indices[0]}")
    for idx in indices[1:]:
        out = Join(out, SVar(f"y{idx}"))
    return out


def decompose(
    phi: Formula, cell_ceiling: int = DEFAULT_CELL_CEILING
) -> AcceptableSequence:
    """Acceptable sequence for phi by structural recursion.

    Contract: a product of structures satisfies phi (under parameters
    evaluated coordinatewise) exactly when the powerset algebra of the
    index set satisfies psi at the truth sets of the partition cells.
    Deterministic: identical input yields identical output.  Results are
    cached; inputs and outputs are immutable.
    """
    return _decompose_cached(phi, cell_ceiling)


@lru_cache(maxsize=512)
def _decompose_cached(phi: Formula, cell_ceiling: int) -> AcceptableSequence:
    counter = itertools.count()

    def fresh_z() -> str:
        return f"z{next(counter)}"

    def rec(f: Formula) -> Tuple[List[Formula], SetFormula, FrozenSet[int]]:
        if isinstance(f, (Eq, Rel)):
            return [f, Not(f)], TermEq(SVar("y0"), One()), frozenset()
        if isinstance(f, Not):
            cells, psi, flags = rec(f.sub)
            return cells, SNot(psi), flags
        if isinstance(f, (And, Or)):
            lcells, lpsi, lflags = rec(f.left)
            rcells, rpsi, rflags = rec(f.right)
            if len(lcells) * len(rcells) > cell_ceiling:
                raise CellCeilingError(
                    f"refinement needs {len(lcells) * len(rcells)} cells,"
                    f" ceiling is {cell_ceiling}"
                )
            refined, lmap, rmap = refine(
                PartitionSequence(tuple(lcells)), PartitionSequence(tuple(rcells))
            )
            lsub = {f"y{j}": _join_vars(lmap[j]) for j in range(len(lcells))}
            rsub = {f"y{k}": _join_vars(rmap[k]) for k in range(len(rcells))}
            psi_l = substitute_set_vars(lpsi, lsub)
            psi_r = substitute_set_vars(rpsi, rsub)
            conn = SAnd if isinstance(f, And) else SOr
            flags = frozenset(
                j * len(rcells) + k
                for j in range(len(lcells))
                for k in range(len(rcells))
                if j in lflags or k in rflags
            )
            return list(refined.cells), conn(psi_l, psi_r), flags
        if isinstance(f, Exists):
            inner, ipsi, iflags = rec(f.body)
            m1 = len(inner)
            if (1 << m1) > cell_ceiling:
                raise CellCeilingError(
                    f"exists step needs {1 << m1} cells, ceiling is {cell_ceiling}"
                )
            cells = sigma_cells(inner, f.var)
            zs = [fresh_z() for _ in range(m1)]
            ipsi_z = substitute_set_vars(
                ipsi, {f"y{j}": SVar(zs[j]) for j in range(m1)}
            )
            conjuncts: List[SetFormula] = []
            for j in range(m1):
                for k in range(j + 1, m1):
                    conjuncts.append(
                        TermEq(Meet(SVar(zs[j]), SVar(zs[k])), Zero())
                    )
            cover = SVar(zs[0])
            for name in zs[1:]:
                cover = Join(cover, SVar(name))
            conjuncts.append(TermEq(cover, One()))
            for j in range(m1):
                w = _join_vars([mask for mask in range(1 << m1) if mask >> j & 1])
                conjuncts.append(TermEq(Meet(SVar(zs[j]), Comp(w)), Zero()))
            conjuncts.append(ipsi_z)
            body = conjuncts[0]
            for c in conjuncts[1:]:
                body = SAnd(body, c)
            psi: SetFormula = body
            for name in reversed(zs):
                psi = SetExists(name, psi)
            flags = frozenset(
                mask
                for mask in range(1 << m1)
                if mask == 0 or any(mask >> j & 1 for j in iflags)
            )
            return cells, psi, flags
        raise TypeError(f"decompose got a non-compiled formula: {f!r}")

    cells, psi, flags = rec(compile_connectives(phi))
    return AcceptableSequence(psi, PartitionSequence(tuple(cells)), flags)


@dataclass(frozen=True)
class Violation:
    kind: str  # exhaustiveness | exclusivity
    universe_size: int
    structure_index: int
    assignment: Mapping[str, int]
    cells: Tuple[int, ...]


def _flatten_and(f: Formula) -> List[Formula]:
    if isinstance(f, And):
        return _flatten_and(f.left) + _flatten_and(f.right)
    return [f]


def check_partition(
    p: PartitionSequence, sig: Signature, check_size: int
) -> List[Violation]:
    """Semantic audit at desk scale: over every structure up to check_size
    and every assignment, exactly one cell must hold.  Empty result means
    the sequence is a partition sequence in the checked regime.

    Cells are flattened into conjunctions of literals over shared
    subformulas, so checking a cell is a pair of mask tests once the
    literal bodies are evaluated; decomposition partitions reuse the same
    few quantified literals across all cells.
    """
    if check_size < 1:
        raise ValueError("check_size must be at least 1")
    for cell in p.cells:
        validate_formula(cell, sig)
    variables = sorted(p.free_variables)

    bodies: List[Formula] = []
    body_index: Dict[int, int] = {}

    def body_bit(g: Formula) -> int:
        got = body_index.get(id(g))
        if got is None:
            got = len(bodies)
            body_index[id(g)] = got
            bodies.append(g)
        return got

    cell_masks: List[Tuple[int, int]] = []
    for cell in p.cells:
        pos = neg = 0
        for lit in _flatten_and(cell):
            if isinstance(lit, Not):
                neg |= 1 << body_bit(lit.sub)
            else:
                pos |= 1 << body_bit(lit)
        cell_masks.append((pos, neg))

    violations: List[Violation] = []
    for index, structure in enumerate(enumerate_structures(sig, check_size)):
        ev = _Evaluator(structure)
        for values in itertools.product(
            range(structure.universe_size), repeat=len(variables)
        ):
            env = dict(zip(variables, values))
            valuation = 0
            for bit, body in enumerate(bodies):
                if ev.check(body, dict(env)):
                    valuation |= 1 << bit
            holding = tuple(
                j
                for j, (pos, neg) in enumerate(cell_masks)
                if valuation & pos == pos and valuation & neg == 0
            )
            if not holding:
                violations.append(
                    Violation(
                        "exhaustiveness",
                        structure.universe_size,
                        index,
                        env,
                        (),
                    )
                )
            elif len(holding) > 1:
                violations.append(
                    Violation(
                        "exclusivity",
                        structure.universe_size,
                        index,
                        env,
                        holding,
                    )
                )
    return violations
