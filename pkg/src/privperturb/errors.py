"""Exception hierarchy for the package.

Every error raised deliberately by this package derives from
:class:`PrivPerturbError` so callers can catch one type at the boundary.
The CLI maps subclasses onto its exit codes (see ``privperturb.cli``).
"""

__all__ = [
    "PrivPerturbError",
    "DimensionError",
    "SvdConvergenceError",
    "AssumptionViolationError",
    "InfeasibleRankTargetError",
    "SolverFailureError",
    "ProtectionNotAchievableError",
    "SteadyStateError",
    "SizeLimitError",
]


class PrivPerturbError(Exception):
    """Base class for all package errors."""


class DimensionError(PrivPerturbError, ValueError):
    """Matrix or vector dimensions are inconsistent with the model."""


class SvdConvergenceError(PrivPerturbError):
    """The iterative SVD kernel failed to converge on both LAPACK drivers."""


class AssumptionViolationError(PrivPerturbError):
    """The released system violates the full-row-rank requirement.

    Raised either structurally (more released outputs than inputs) or
    numerically (a rank drop of the system pencil was confirmed at some
    frequency).
    """


class InfeasibleRankTargetError(PrivPerturbError, ValueError):
    """The requested pencil rank target is below the achievable floor."""


class SolverFailureError(PrivPerturbError):
    """The semidefinite solver did not return a usable optimal point."""


class ProtectionNotAchievableError(PrivPerturbError):
    """No design in the searched family protects all requested entries."""


class SteadyStateError(PrivPerturbError):
    """The steady-state input equation has no solution (singular map)."""


class SizeLimitError(PrivPerturbError, ValueError):
    """A combinatorial oracle was asked to exceed its hard size limit."""
