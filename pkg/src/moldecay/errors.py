"""Exception types shared across the package.

Every failure mode that callers are expected to handle gets its own class so
the CLI can map it to a stable exit code (see :mod:`moldecay.cli`).
"""


class MoldecayError(Exception):
    """Base class for all package errors."""


class ValidationError(MoldecayError):
    """A configuration value is out of its admissible range."""


class ParseError(ValidationError):
    """A configuration file could not be parsed; carries file/key context."""


class DegenerateBand(MoldecayError):
    """Band gap fell below the degeneracy threshold at some grid point."""


class NonHermitianFiber(MoldecayError):
    """A fiber matrix failed the Hermiticity check."""


class GapViolation(MoldecayError):
    """Measured band gap is smaller than the requested threshold."""

    def __init__(self, message, grid_point=None, gap=None):
        super().__init__(message)
        self.grid_point = grid_point
        self.gap = gap


class DimensionMismatch(MoldecayError):
    """Operands live on different grids or electronic dimensions."""


class RoughFiber(MoldecayError):
    """Fourier tail of a fiber field is too large for spectral derivatives."""


class StepSizeTooLarge(MoldecayError):
    """Splitting step self-check failed even at the smallest allowed step."""


class ProjectorMismatch(MoldecayError):
    """Projector field does not belong to the operator's fiber field."""


class DefectTooLarge(MoldecayError):
    """Almost-projection defect is >= 1/4, purification not admissible."""


class ResonantMode(MoldecayError):
    """A photon mode coincides with a band-gap value to machine precision."""


class WrongSign(MoldecayError):
    """Band ordering violated: E_j - E_i must stay positive on the grid."""


class QuadratureNotConverged(MoldecayError):
    """Doubling the quadrature resolution changed the result by > 1%."""


class KrylovBreakdown(MoldecayError):
    """Lanczos recurrence broke down and restarts did not recover."""


class BudgetExceeded(MoldecayError):
    """Requested computation exceeds the configured size/step budget."""


class NonPositiveValue(MoldecayError):
    """Log-log fit received a value <= 0."""


class OutOfLinearRegime(UserWarning):
    """Golden-rule probability left the linear regime (warning, not fatal)."""
