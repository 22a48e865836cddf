"""fvkit: decomposition of first-order sentences over direct products,
quantifier elimination for powerset algebras with cardinality predicates,
and effective finite-support witnesses."""

from .errors import FvkitError
from .fv import AcceptableSequence, PartitionSequence, check_partition, decompose, refine
from .logic import (
    And,
    Const,
    Eq,
    Exists,
    Family,
    FiniteStructure,
    Forall,
    Formula,
    Func,
    Implies,
    Not,
    Or,
    Rel,
    Signature,
    Term,
    Var,
    enumerate_structures,
    evaluate,
    free_vars,
    product,
    truth_set,
)
from .parsing import (
    parse_family,
    parse_formula,
    parse_signature,
    parse_structure,
    serialize_family,
    serialize_formula,
    serialize_signature,
    serialize_structure,
)
from .setalgebra import (
    CardinalityCondition,
    LinearPolynomial,
    RegionProfile,
    SATURATED,
    SkolemCondition,
    SkolemConditionSet,
    cap_bound,
    eval_enumeration,
    eval_profile,
    parse_set_formula,
    profile_of,
    quantifier_eliminate,
    reduce_to_cardinality_conditions,
    serialize_set_formula,
    skolem_conditions,
    to_linear_polynomial,
)
from .witness import (
    ReplacementPlan,
    SupportWitness,
    eval_product_via_fv,
    finite_support,
    pseudofinite_witness,
    replace_with_finite,
    support_bound,
    witness_pipeline,
)

__version__ = "0.1.0"
