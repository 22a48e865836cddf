"""Symbolic cardinality-condition sets for sentences over products.

For a sentence phi the decomposition characterizes product truth by a
set-sort formula over the truth sets of the partition cells; by the
classical counting argument that truth depends only on the finitely many
cell cardinalities.  This module computes, by structural recursion in
lockstep with the decomposition, an explicit condition set: a union of
"boxes", each demanding exact sizes on some cells and lower bounds on
the rest.  Both the accepting and the rejecting side are carried through
every node, so negation is a swap and no condition set ever has to be
complemented.

The exists step is the interesting one.  With inner cells theta_0..theta_m
and outer cells sigma_S (S the set of inner cells realizable at an index),
a product satisfies the quantified formula exactly when the index masses
(n_S) admit a transport m[S -> j in S] whose arrival vector z matches an
accepted inner box.  Feasibility of that transport is a finite conjunction
of subset inequalities (Gale/Hoffman conditions), which keeps everything
inside the box language.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

from .errors import CellCeilingError, ConditionBudgetError
from .fv import (
    DEFAULT_CELL_CEILING,
    PartitionSequence,
    compile_connectives,
    refine,
    sigma_cells,
)
from .logic import And, Eq, Exists, Formula, Not, Or, Rel
from .setalgebra import SkolemCondition, normalize_conditions

DEFAULT_BOX_BUDGET = 50_000

# a linear constraint: (scope cells, bound); leq means sum over scope <= bound
_Constraint = Tuple[FrozenSet[int], int]


@dataclass(frozen=True)
class NodeConditions:
    """Cells of one decomposition node with both condition covers."""

    cells: Tuple[Formula, ...]
    flags: FrozenSet[int]
    accepted: Tuple[SkolemCondition, ...]
    rejected: Tuple[SkolemCondition, ...]


def _intersect(
    a: SkolemCondition, b: SkolemCondition
) -> Optional[SkolemCondition]:
    g: List[int] = []
    s = set()
    for j in range(len(a.g)):
        a_exact = j in a.s
        b_exact = j in b.s
        if a_exact and b_exact:
            if a.g[j] != b.g[j]:
                return None
            g.append(a.g[j])
            s.add(j)
        elif a_exact:
            if a.g[j] < b.g[j]:
                return None
            g.append(a.g[j])
            s.add(j)
        elif b_exact:
            if b.g[j] < a.g[j]:
                return None
            g.append(b.g[j])
            s.add(j)
        else:
            g.append(max(a.g[j], b.g[j]))
    return SkolemCondition(tuple(g), frozenset(s))


def _compositions(total: int, slots: int):
    """Weak compositions of total into slots parts, lexicographic."""
    if slots == 0:
        if total == 0:
            yield ()
        return
    for head in range(total + 1):
        for tail in _compositions(total - head, slots - 1):
            yield (head,) + tail


def _system_to_boxes(
    ncells: int,
    flags: FrozenSet[int],
    leqs: Sequence[_Constraint],
    geqs: Sequence[_Constraint],
    budget: int,
) -> List[SkolemCondition]:
    """Box cover of the solution set of a conjunction of subset-sum
    constraints over the unflagged cells (flagged cells are zero).

    Cells in a <= scope get enumerated exact values; each >= residual is
    distributed over its remaining cells in all ways, several demands
    combining by pointwise maximum.  The cover is exact: its union is the
    full solution set.
    """
    leqs = [(frozenset(S) - flags, c) for S, c in leqs]
    geqs = [(frozenset(S) - flags, d) for S, d in geqs if d > 0]
    for S, d in geqs:
        if not S and d > 0:
            return []
    exact_cells = sorted(set().union(*[S for S, _ in leqs])) if leqs else []
    boxes: List[SkolemCondition] = []
    steps = 0

    def emit(values: Dict[int, int]) -> None:
        nonlocal steps
        residuals = []
        for S, d in geqs:
            r = d - sum(values.get(cell, 0) for cell in S & set(values))
            contributors = sorted(S - set(values))
            if r > 0 and not contributors:
                return
            residuals.append((contributors, max(r, 0)))
        options = [
            list(_compositions(r, len(contributors))) if r > 0 else [()]
            for contributors, r in residuals
        ]
        for combo in itertools.product(*options):
            steps += 1
            if steps > budget:
                raise ConditionBudgetError(
                    f"condition cover exceeded the budget of {budget}"
                )
            g = [0] * ncells
            s = set(flags) | set(values)
            for cell, v in values.items():
                g[cell] = v
            for (contributors, r), parts in zip(residuals, combo):
                if r > 0:
                    for cell, part in zip(contributors, parts):
                        g[cell] = max(g[cell], part)
            boxes.append(SkolemCondition(tuple(g), frozenset(s)))

    def assign(idx: int, values: Dict[int, int], sums: List[int]) -> None:
        nonlocal steps
        steps += 1
        if steps > budget:
            raise ConditionBudgetError(
                f"condition cover exceeded the budget of {budget}"
            )
        if idx == len(exact_cells):
            emit(dict(values))
            return
        cell = exact_cells[idx]
        headroom = min(
            (c - sums[i] for i, (S, c) in enumerate(leqs) if cell in S),
            default=0,
        )
        for v in range(headroom + 1):
            values[cell] = v
            for i, (S, _c) in enumerate(leqs):
                if cell in S:
                    sums[i] += v
            assign(idx + 1, values, sums)
            for i, (S, _c) in enumerate(leqs):
                if cell in S:
                    sums[i] -= v
            del values[cell]

    assign(0, {}, [0] * len(leqs))
    return boxes


def _gale_system(
    sources: Sequence[int], box: SkolemCondition
) -> Tuple[List[_Constraint], List[_Constraint]]:
    """Feasibility of transporting the source masses (cell S may only feed
    inner sinks j in S) into an arrival vector matching the inner box:
    exact sinks are capacity cuts, positive lower bounds are demand cuts.

    Capacity: for T within the exact sinks, sources confined to T carry at
    most the exact total of T; only the maximal T per bound matters, so T
    ranges over subsets of the positive exact sinks joined with all
    zero-exact sinks.  Demand: for L within the positive sinks, at least
    the total of L must come from sources touching L.
    """
    exact = sorted(box.s)
    exact_zero = [j for j in exact if box.g[j] == 0]
    exact_pos = [j for j in exact if box.g[j] > 0]
    leqs: List[_Constraint] = []
    for r in range(len(exact_pos) + 1):
        for chosen in itertools.combinations(exact_pos, r):
            allowed = 0
            for j in exact_zero + list(chosen):
                allowed |= 1 << j
            bound = sum(box.g[j] for j in chosen)
            scope = frozenset(S for S in sources if S & ~allowed == 0)
            if scope:
                leqs.append((scope, bound))
    support = [j for j, gj in enumerate(box.g) if gj > 0]
    geqs: List[_Constraint] = []
    for r in range(1, len(support) + 1):
        for chosen in itertools.combinations(support, r):
            mask = 0
            for j in chosen:
                mask |= 1 << j
            demand = sum(box.g[j] for j in chosen)
            scope = frozenset(S for S in sources if S & mask)
            geqs.append((scope, demand))
    return leqs, geqs


def transport_feasible(
    masses: Sequence[int], box: SkolemCondition
) -> bool:
    """Reference check (small sizes): can the masses, cell S feeding only
    sinks in S, arrive at a vector matching the box?  Used to validate the
    Gale conditions in tests and for family-driven matching."""
    sinks = len(box.g)
    arrivals = [0] * sinks

    sources = [
        (mask, count) for mask, count in enumerate(masses) if count > 0
    ]

    def place(idx: int) -> bool:
        if idx == len(sources):
            return all(
                arrivals[j] == box.g[j]
                if j in box.s
                else arrivals[j] >= box.g[j]
                for j in range(sinks)
            )
        mask, count = sources[idx]
        targets = [j for j in range(sinks) if mask >> j & 1]
        if not targets:
            return False
        for parts in _compositions(count, len(targets)):
            ok = True
            for j, part in zip(targets, parts):
                arrivals[j] += part
                if j in box.s and arrivals[j] > box.g[j]:
                    ok = False
            if ok and place(idx + 1):
                return True
            for j, part in zip(targets, parts):
                arrivals[j] -= part
        return False

    return place(0)


def build_condition_sets(
    phi: Formula,
    cell_ceiling: int = DEFAULT_CELL_CEILING,
    budget: int = DEFAULT_BOX_BUDGET,
) -> NodeConditions:
    """Condition covers for phi, cells aligned with the decomposition.
    Results are cached; inputs and outputs are immutable."""
    return _build_cached(phi, cell_ceiling, budget)


@lru_cache(maxsize=256)
def _build_cached(
    phi: Formula, cell_ceiling: int, budget: int
) -> NodeConditions:

    def rec(f: Formula) -> NodeConditions:
        if isinstance(f, (Eq, Rel)):
            return NodeConditions(
                (f, Not(f)),
                frozenset(),
                (SkolemCondition((0, 0), frozenset((1,))),),
                (SkolemCondition((0, 1), frozenset()),),
            )
        if isinstance(f, Not):
            sub = rec(f.sub)
            return NodeConditions(sub.cells, sub.flags, sub.rejected, sub.accepted)
        if isinstance(f, (And, Or)):
            left = rec(f.left)
            right = rec(f.right)
            a, b = len(left.cells), len(right.cells)
            if a * b > cell_ceiling:
                raise CellCeilingError(
                    f"refinement needs {a * b} cells, ceiling is {cell_ceiling}"
                )
            refined, _lmap, _rmap = refine(
                PartitionSequence(left.cells), PartitionSequence(right.cells)
            )
            flags = frozenset(
                j * b + k
                for j in range(a)
                for k in range(b)
                if j in left.flags or k in right.flags
            )
            ncells = a * b

            def row_lift(conds: Iterable[SkolemCondition]) -> List[SkolemCondition]:
                out: List[SkolemCondition] = []
                for cond in conds:
                    leqs: List[_Constraint] = []
                    geqs: List[_Constraint] = []
                    for j in range(a):
                        scope = frozenset(j * b + k for k in range(b))
                        if j in cond.s:
                            leqs.append((scope, cond.g[j]))
                            if cond.g[j] > 0:
                                geqs.append((scope, cond.g[j]))
                        elif cond.g[j] > 0:
                            geqs.append((scope, cond.g[j]))
                    out.extend(_system_to_boxes(ncells, flags, leqs, geqs, budget))
                return out

            def col_lift(conds: Iterable[SkolemCondition]) -> List[SkolemCondition]:
                out: List[SkolemCondition] = []
                for cond in conds:
                    leqs: List[_Constraint] = []
                    geqs: List[_Constraint] = []
                    for k in range(b):
                        scope = frozenset(j * b + k for j in range(a))
                        if k in cond.s:
                            leqs.append((scope, cond.g[k]))
                            if cond.g[k] > 0:
                                geqs.append((scope, cond.g[k]))
                        elif cond.g[k] > 0:
                            geqs.append((scope, cond.g[k]))
                    out.extend(_system_to_boxes(ncells, flags, leqs, geqs, budget))
                return out

            def both(
                first: Iterable[SkolemCondition], second: Iterable[SkolemCondition]
            ) -> List[SkolemCondition]:
                out = []
                for x in first:
                    for y in second:
                        meet = _intersect(x, y)
                        if meet is not None:
                            out.append(meet)
                        if len(out) > budget:
                            raise ConditionBudgetError(
                                f"condition cover exceeded the budget of {budget}"
                            )
                return out

            row_acc = row_lift(left.accepted)
            col_acc = col_lift(right.accepted)
            row_rej = row_lift(left.rejected)
            col_rej = col_lift(right.rejected)
            if isinstance(f, And):
                accepted = normalize_conditions(both(row_acc, col_acc))
                rejected = normalize_conditions(row_rej + col_rej)
            else:
                accepted = normalize_conditions(row_acc + col_acc)
                rejected = normalize_conditions(both(row_rej, col_rej))
            return NodeConditions(refined.cells, flags, accepted, rejected)
        if isinstance(f, Exists):
            inner = rec(f.body)
            m0 = len(inner.cells)
            if (1 << m0) > cell_ceiling:
                raise CellCeilingError(
                    f"exists step needs {1 << m0} cells, ceiling is {cell_ceiling}"
                )
            cells = tuple(sigma_cells(list(inner.cells), f.var))
            flags = frozenset(
                mask
                for mask in range(1 << m0)
                if mask == 0 or any(mask >> j & 1 for j in inner.flags)
            )
            ncells = 1 << m0
            sources = [mask for mask in range(ncells) if mask not in flags]

            accepted_boxes: List[SkolemCondition] = []
            systems: List[Tuple[List[_Constraint], List[_Constraint]]] = []
            for box in inner.accepted:
                leqs, geqs = _gale_system(sources, box)
                systems.append((leqs, geqs))
                accepted_boxes.extend(
                    _system_to_boxes(ncells, flags, leqs, geqs, budget)
                )
            accepted = normalize_conditions(accepted_boxes)

            if not systems:
                rejected = (SkolemCondition((0,) * ncells, flags),)
            else:
                violation_lists: List[List[Tuple[str, _Constraint]]] = []
                for leqs, geqs in systems:
                    violations: List[Tuple[str, _Constraint]] = []
                    for S, c in leqs:
                        violations.append(("geq", (S, c + 1)))
                    for S, d in geqs:
                        if d >= 1:
                            violations.append(("leq", (S, d - 1)))
                    if not violations:
                        # this inner box is feasible for every mass vector,
                        # so nothing is rejected
                        violation_lists = []
                        break
                    violation_lists.append(violations)
                rejected_boxes: List[SkolemCondition] = []
                if violation_lists:
                    total = 1
                    for v in violation_lists:
                        total *= len(v)
                    if total > budget:
                        raise ConditionBudgetError(
                            f"{total} violation combinations exceed the budget"
                        )
                    for combo in itertools.product(*violation_lists):
                        leqs = [c for kind, c in combo if kind == "leq"]
                        geqs = [c for kind, c in combo if kind == "geq"]
                        rejected_boxes.extend(
                            _system_to_boxes(ncells, flags, leqs, geqs, budget)
                        )
                rejected = normalize_conditions(rejected_boxes)
            return NodeConditions(cells, flags, accepted, rejected)
        raise TypeError(f"unexpected formula shape: {f!r}")

    return rec(compile_connectives(phi))
