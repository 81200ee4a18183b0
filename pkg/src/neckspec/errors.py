"""Exception hierarchy.

Validation-type errors derive from :class:`ValidationError` (CLI exit code 2),
numerical non-convergence from :class:`ConvergenceError` (exit code 3).
"""


class NeckspecError(Exception):
    """Base class for all package errors."""


class ValidationError(NeckspecError, ValueError):
    """Invalid user input: configuration, domain or precondition violations."""


class ConfigParseError(ValidationError):
    """Malformed JSON; carries the byte offset of the failure."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class ConfigError(ValidationError):
    """A configuration field failed validation."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class DomainError(ValidationError):
    """An argument lies outside the domain of an operation."""


class MeshError(ValidationError):
    """The requested mesh cannot be built (e.g. resolution too coarse)."""


class TopologyError(NeckspecError):
    """The glued complex is not a closed 2-manifold."""


class AssemblyError(NeckspecError):
    """Degenerate element encountered during assembly."""


class PencilError(NeckspecError):
    """The generalized pencil is ill-posed (mass matrix not positive definite)."""


class DegeneracyError(ValidationError):
    """Trial functions are linearly dependent."""


class CompatibilityError(ValidationError):
    """Right-hand side violates the solvability condition of a singular system."""


class DataError(ValidationError):
    """Not enough or invalid data for a fit."""


class FlowError(NeckspecError):
    """A retraction trajectory entered the excluded ball around the singular set."""


class ConvergenceError(NeckspecError):
    """An iterative method failed to converge."""

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals


class SolverError(ConvergenceError):
    """Linear solver failed to reach the requested residual."""


class ODEError(ConvergenceError):
    """Adaptive integrator step size underflowed."""
