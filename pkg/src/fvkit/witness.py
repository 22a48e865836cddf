"""Finite support extraction and the constructive finite-witness pipeline.

Given a sentence true in a product: a formula-only bound N, a subset of at
most N indices whose every superset still satisfies the sentence, a
per-index replacement by small structures with the same cell pattern, and
finally a finite product witnessing the sentence.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Tuple

from .conditions import DEFAULT_BOX_BUDGET, build_condition_sets
from .errors import (
    EvaluationError,
    InternalMatchError,
    PreconditionError,
    ReplacementBudgetError,
)
from .fv import DEFAULT_CELL_CEILING, AcceptableSequence, decompose
from .logic import (
    DEFAULT_PRODUCT_CAP,
    Family,
    FiniteStructure,
    Formula,
    _Evaluator,
    enumerate_structures,
    evaluate,
    free_vars,
    product,
)
from .parsing import serialize_formula
from .setalgebra import (
    SkolemConditionSet,
    cap_bound,
    eval_profile,
    profile_of,
)


def _cell_truth_sets(fam: Family, seq: AcceptableSequence) -> List[List[str]]:
    """Truth sets of every cell, sharing one evaluator per factor so the
    subformulas the cells have in common are evaluated once."""
    ordered: List[List[str]] = [[] for _ in seq.cells]
    for label in fam.labels:
        ev = _Evaluator(fam.structures[label])
        for j, theta in enumerate(seq.cells):
            if ev.check(theta, {}):
                ordered[j].append(label)
    return ordered


def eval_product_via_fv(
    fam: Family,
    phi: Formula,
    cell_ceiling: int = DEFAULT_CELL_CEILING,
    cap: Optional[int] = None,
) -> bool:
    """Truth of phi in the product of the family, without materializing the
    product: decompose, compute truth sets, evaluate the set formula over
    their region profile."""
    if free_vars(phi):
        raise EvaluationError("product evaluation needs a sentence")
    seq = decompose(phi, cell_ceiling)
    sets = _cell_truth_sets(fam, seq)
    variables = tuple(f"y{j}" for j in range(len(seq.cells)))
    assignment = {f"y{j}": frozenset(sets[j]) for j in range(len(seq.cells))}
    use_cap = cap if cap is not None else cap_bound(seq.psi)
    profile = profile_of(assignment, fam.labels, use_cap, variables=variables)
    return eval_profile(seq.psi, profile)


def support_bound(
    phi: Formula,
    cell_ceiling: int = DEFAULT_CELL_CEILING,
    budget: int = DEFAULT_BOX_BUDGET,
) -> Tuple[SkolemConditionSet, int]:
    """Condition set and effective support bound N for phi.

    N depends only on phi.  Computed symbolically cell-by-cell alongside
    the decomposition; cells the construction proves empty in every family
    are pinned to zero, which is what makes N = 0 for valid sentences.
    """
    if free_vars(phi):
        raise EvaluationError("support bound needs a sentence")
    node = build_condition_sets(phi, cell_ceiling, budget)
    cond_set = SkolemConditionSet(
        len(node.cells),
        node.accepted,
        max([0] + [c.total for c in node.accepted]),
    )
    return cond_set, cond_set.bound


@dataclass(frozen=True)
class SupportWitness:
    """A support set I' with its matched cardinality condition.

    Every superset of `support` inside the family's index set keeps the
    sentence true in the subproduct.  `chosen` lists the per-cell picks:
    the whole truth set on exact cells, the first g labels elsewhere.
    """

    support: Tuple[str, ...]
    bound: int
    matched_condition: int
    condition_set: SkolemConditionSet
    cell_sizes: Tuple[int, ...]
    chosen: Tuple[Tuple[str, ...], ...]


def finite_support(
    fam: Family,
    phi: Formula,
    cell_ceiling: int = DEFAULT_CELL_CEILING,
    budget: int = DEFAULT_BOX_BUDGET,
) -> SupportWitness:
    """Support extraction: pick the first matching condition, take the
    whole truth set on its exact cells and the first g labels (in family
    order) elsewhere."""
    if not eval_product_via_fv(fam, phi, cell_ceiling):
        raise PreconditionError("sentence is false in the product")
    seq = decompose(phi, cell_ceiling)
    cond_set, bound = support_bound(phi, cell_ceiling, budget)
    ordered_sets = _cell_truth_sets(fam, seq)
    sizes = tuple(len(t) for t in ordered_sets)
    matched = cond_set.match(sizes)
    if matched is None:
        raise InternalMatchError(
            "product satisfies the sentence but no cardinality condition"
            " matches; this indicates a bug in the condition calculus"
        )
    cond = cond_set.conditions[matched]
    chosen: List[Tuple[str, ...]] = []
    for j in range(len(seq.cells)):
        if j in cond.s:
            chosen.append(tuple(ordered_sets[j]))
        else:
            chosen.append(tuple(ordered_sets[j][: cond.g[j]]))
    union = set()
    for picks in chosen:
        union.update(picks)
    support = tuple(l for l in fam.labels if l in union)
    return SupportWitness(
        support, bound, matched, cond_set, sizes, tuple(chosen)
    )


# first enumerated model per (signature, cell, budget); cells repeat across
# families, the scan does not depend on the family
_FIRST_MODEL_CACHE: Dict[tuple, Optional[FiniteStructure]] = {}


@dataclass(frozen=True)
class ReplacementPlan:
    """Per-index replacement structures and the cell each one satisfies."""

    replacements: Mapping[str, FiniteStructure]
    cell_of: Mapping[str, int]

    def apply(self, fam: Family) -> Family:
        return Family(fam.labels, dict(self.replacements))


def replace_with_finite(
    fam: Family,
    phi: Formula,
    search_size: int,
    cell_ceiling: int = DEFAULT_CELL_CEILING,
) -> ReplacementPlan:
    """For each index, the first enumerated structure satisfying the same
    partition cell.  Truth sets, and hence product truth of phi, are
    unchanged.  search_size is a budget, not a completeness claim."""
    if not eval_product_via_fv(fam, phi, cell_ceiling):
        raise PreconditionError("sentence is false in the product")
    seq = decompose(phi, cell_ceiling)
    sig = fam.signature
    cell_members = _cell_truth_sets(fam, seq)
    cell_of: Dict[str, int] = {}
    for label in fam.labels:
        holders = [j for j, members in enumerate(cell_members) if label in members]
        if len(holders) != 1:
            raise InternalMatchError(
                f"index {label} lies in {len(holders)} cells; the partition is broken"
            )
        cell_of[label] = holders[0]
    first_model: Dict[int, Optional[FiniteStructure]] = {}
    failures: Dict[str, str] = {}
    replacements: Dict[str, FiniteStructure] = {}
    for label in fam.labels:
        j = cell_of[label]
        if j not in first_model:
            cache_key = (sig, serialize_formula(seq.cells[j]), search_size)
            if cache_key in _FIRST_MODEL_CACHE:
                first_model[j] = _FIRST_MODEL_CACHE[cache_key]
            else:
                found = None
                for candidate in enumerate_structures(sig, search_size):
                    if evaluate(candidate, seq.cells[j]):
                        found = candidate
                        break
                first_model[j] = found
                if len(_FIRST_MODEL_CACHE) < 4096:
                    _FIRST_MODEL_CACHE[cache_key] = found
        if first_model[j] is None:
            failures[label] = (
                f"cell {j} ({serialize_formula(seq.cells[j])}) has no model of"
                f" universe size <= {search_size}; the exhaustive scan found"
                " none, so the cell is unsatisfiable within this budget"
            )
        else:
            replacements[label] = first_model[j]
    if failures:
        raise ReplacementBudgetError(
            "no replacement within the search budget for: "
            + ", ".join(sorted(failures)),
            failures,
        )
    return ReplacementPlan(replacements, cell_of)


@dataclass(frozen=True)
class WitnessResult:
    """Everything the witness pipeline produced, for reports."""

    plan: ReplacementPlan
    support: SupportWitness
    chosen_indices: Tuple[str, ...]
    extended: bool
    structure: FiniteStructure


def witness_pipeline(
    fam: Family,
    phi: Formula,
    search_size: int,
    cell_ceiling: int = DEFAULT_CELL_CEILING,
    budget: int = DEFAULT_BOX_BUDGET,
    product_cap: int = DEFAULT_PRODUCT_CAP,
) -> WitnessResult:
    """Replace factors by small models, extract a support inside the
    replaced family, and materialize the finite subproduct.  An empty
    support is widened by the first index so the returned product is a
    structure over a nonempty family."""
    plan = replace_with_finite(fam, phi, search_size, cell_ceiling)
    replaced = plan.apply(fam)
    support = finite_support(replaced, phi, cell_ceiling, budget)
    chosen = support.support
    extended = False
    if not chosen:
        chosen = (fam.labels[0],)
        extended = True
    sub = replaced.restrict(chosen)
    structure = product(sub, product_cap)
    if not evaluate(structure, phi):
        raise InternalMatchError(
            "materialized witness does not satisfy the sentence; this"
            " indicates a bug in the support extraction"
        )
    return WitnessResult(plan, support, chosen, extended, structure)


def pseudofinite_witness(
    fam: Family,
    phi: Formula,
    search_size: int,
    cell_ceiling: int = DEFAULT_CELL_CEILING,
    budget: int = DEFAULT_BOX_BUDGET,
    product_cap: int = DEFAULT_PRODUCT_CAP,
) -> FiniteStructure:
    """The finite structure produced by the full pipeline; satisfies phi."""
    return witness_pipeline(
        fam, phi, search_size, cell_ceiling, budget, product_cap
    ).structure


# ---------------------------------------------------------------------------
# reports


def render_support_report(phi: Formula, witness: SupportWitness) -> str:
    lines = [
        f"formula: {serialize_formula(phi)}",
        f"cells: {witness.condition_set.cells}",
        f"conditions: {witness.condition_set.M}",
        f"bound N: {witness.bound}",
        f"matched condition: {witness.matched_condition}",
    ]
    cond = witness.condition_set.conditions[witness.matched_condition]
    for j in range(witness.condition_set.cells):
        mode = "exact" if j in cond.s else "at-least"
        picks = ",".join(witness.chosen[j])
        lines.append(
            f"cell {j}: g={cond.g[j]} mode={mode}"
            f" truth-set-size={witness.cell_sizes[j]} Z={{{picks}}}"
        )
    lines.append(
        "support I' = {" + ",".join(witness.support) + "}"
        f" size {len(witness.support)} (bound {witness.bound})"
    )
    return "\n".join(lines) + "\n"


def render_witness_report(phi: Formula, result: WitnessResult) -> str:
    from .parsing import serialize_structure

    lines = [render_support_report(phi, result.support).rstrip("\n")]
    lines.append("replacements:")
    for label in sorted(result.plan.replacements):
        s = result.plan.replacements[label]
        lines.append(
            f"  {label}: cell {result.plan.cell_of[label]}"
            f" size {s.universe_size}"
        )
    chosen = ",".join(result.chosen_indices)
    note = " (support empty; widened by one index)" if result.extended else ""
    lines.append(f"witness product over J = {{{chosen}}}{note}")
    lines.append("witness structure:")
    lines.append(serialize_structure(result.structure).rstrip("\n"))
    return "\n".join(lines) + "\n"
