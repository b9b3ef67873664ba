"""Exception types shared across the package."""


class BiaffineError(Exception):
    """Base class for all library-specific errors."""


class DimensionMismatch(BiaffineError, ValueError):
    """Vector/matrix shapes are inconsistent with the system sizes."""


class NotInDomain(BiaffineError):
    """theta makes A + diag(B theta) (numerically) singular.

    Carries the reciprocal condition estimate that triggered the rejection.
    """

    def __init__(self, message, rcond=0.0):
        super().__init__(message)
        self.rcond = float(rcond)


class InvalidSparsity(BiaffineError, ValueError):
    """Requested number of nonzeros is outside [1, n]."""


class SingularDraw(BiaffineError):
    """A random matrix draw was numerically singular; retry with a fresh substream."""


class InfeasibleSpectrum(BiaffineError, ValueError):
    """No inverse-singular-value profile meets the norm constraints at this (n, gamma)."""


class TooLarge(BiaffineError, ValueError):
    """Pairing enumeration requested beyond the combinatorial cap."""


class LengthMismatch(BiaffineError, ValueError):
    """Index tuple length does not match the pairing size."""


class SizeMismatch(BiaffineError, ValueError):
    """Two pairings over different ground sets were combined."""


class SingularGram(BiaffineError):
    """The pairing Gram matrix is not numerically invertible for this (k, d)."""


class ConvergenceFailure(BiaffineError):
    """Power iteration did not reach tolerance; carries the last iterate."""

    def __init__(self, message, last_estimate=None):
        super().__init__(message)
        self.last_estimate = last_estimate


class InsufficientData(BiaffineError, ValueError):
    """Scaling fit needs at least 3 distinct sizes with positive values."""


class ReportedViolation(BiaffineError):
    """A cost-function envelope check failed; carries the failing points."""

    def __init__(self, message, violations=None):
        super().__init__(message)
        self.violations = violations or []


class InvalidConfig(BiaffineError, ValueError):
    """Experiment or CLI configuration failed validation."""
