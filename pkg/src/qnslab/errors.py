"""Exception hierarchy shared by all qnslab modules."""


class QNSError(Exception):
    """Base class for every error raised by qnslab."""


class ShapeError(QNSError, ValueError):
    """Field rank or grid mismatch."""


class MultiplierPolicyError(QNSError, ValueError):
    """A Fourier multiplier is singular at the zero mode and no policy was given."""


class DomainError(QNSError, ValueError):
    """An argument lies outside the admissible range of an operation."""

    def __init__(self, message, **info):
        super().__init__(message)
        self.info = info


class PositivityError(DomainError):
    """Density dropped below the configured floor."""


class ConvergenceError(QNSError, RuntimeError):
    """An iteration exceeded its budget without meeting its tolerance."""

    def __init__(self, message, iterations=None, last_ratio=None):
        super().__init__(message)
        self.iterations = iterations
        self.last_ratio = last_ratio


class CompatibilityError(QNSError, RuntimeError):
    """Mean-zero solvability condition on the torus is violated beyond the bound."""

    def __init__(self, message, defect=None):
        super().__init__(message)
        self.defect = defect


class ContractionError(ConvergenceError):
    """Outer fixed-point iteration stopped contracting."""


class CFLError(QNSError, RuntimeError):
    """Requested time step exceeds the advective stability bound."""

    def __init__(self, message, dt=None, dt_max=None):
        super().__init__(message)
        self.dt = dt
        self.dt_max = dt_max


class ResolutionError(QNSError, RuntimeError):
    """Quadrature refinement changed a result by more than the allowed amount."""


class ConditioningError(QNSError, RuntimeError):
    """Dense system is too ill-conditioned to trust its direct solve."""


class FitError(QNSError, ValueError):
    """Decay fit requested on an unusable window or channel."""


class ConfigError(QNSError, ValueError):
    """Run configuration could not be parsed or validated."""


class ResolutionWarning(UserWarning):
    """A derivative order reaches into modes that are not trustworthy on this grid."""


class HypothesisWarning(UserWarning):
    """Forcing is larger than the configured smallness threshold."""
