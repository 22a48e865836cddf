"""Exception hierarchy shared across the package."""


class FvkitError(Exception):
    """Base class for all library errors."""


class ParseError(FvkitError):
    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)


class SignatureError(FvkitError):
    """Malformed signature or symbol/arity mismatch."""


class StructureError(FvkitError):
    """Structure tables violate an invariant (range, totality, coverage)."""


class EvaluationError(FvkitError):
    """Unbound variable or evaluation over the wrong signature."""


class ProductSizeError(FvkitError):
    """Materialized product universe would exceed the configured cap."""


class CellCeilingError(FvkitError):
    """A decomposition would exceed the configured cell ceiling."""


class EnumerationLimitError(FvkitError):
    """Index set too large for subset enumeration semantics."""


class CapError(FvkitError):
    """Profile cap below the bound required by the formula."""


class NonRingTermError(FvkitError):
    """Set term outside the ring fragment, or not linear."""


class SkolemSpaceError(FvkitError):
    """Profile space for condition extraction exceeds the budget."""


class ConditionBudgetError(FvkitError):
    """Symbolic condition-set computation exceeded its working budget."""


class PreconditionError(FvkitError):
    """Operation precondition violated (e.g. sentence false in the product)."""


class ReplacementBudgetError(FvkitError):
    """No replacement model found within the search budget.

    `failures` maps index labels to a human-readable reason string.
    """

    def __init__(self, message, failures=None):
        super().__init__(message)
        self.failures = dict(failures or {})


class InternalMatchError(FvkitError):
    """No matching cardinality condition although the contract promised one."""
