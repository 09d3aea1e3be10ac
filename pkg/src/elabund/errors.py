"""Exception types shared across the package."""


class EstimationError(Exception):
    """Base class for numerical estimation failures."""


class SingularDesignError(EstimationError):
    """Design matrix of positively-weighted rows is rank deficient."""


class SeparationError(EstimationError):
    """Coefficients diverged beyond the allowed box (complete separation)."""


class InfeasibleConstraintError(EstimationError):
    """alpha lies outside the convex hull of the constraint values."""


class DegenerateModelError(EstimationError):
    """A probability parameter collapsed to 0 or 1 during fitting."""


class SingularInformationError(EstimationError):
    """An information block required for a variance estimate is singular."""


class DataFormatError(ValueError):
    """Malformed input data (bad row, wrong type, truncation violation)."""
