"""Exception hierarchy.

Every numerical failure derives from :class:`NumericalError` so that the
command line front end can map it to a single exit code.
"""


class NumericalError(RuntimeError):
    """Base class for failures of a numerical routine."""


class DegeneracyError(NumericalError):
    """Ground state requested for a gapless BdG spectrum."""


class PropagationOverflowError(NumericalError):
    """Non-finite amplitudes after a propagation step (dt too large)."""


class ZeroProbabilityJumpError(NumericalError):
    """Jump requested on a site whose occupation is numerically zero."""


class StateCorruptionError(NumericalError):
    """Correlation spectrum left the physical interval [0, 1]."""


class StepSizeError(NumericalError):
    """Euler step with total jump probability >= 1."""


class IntegrationError(NumericalError):
    """Moment integration produced an unphysical correlation matrix."""


class ConvergenceError(NumericalError):
    """Steady-state search did not converge."""

    def __init__(self, message: str, residual: float = float("nan")):
        super().__init__(message)
        self.residual = residual


class DimensionGuardError(NumericalError):
    """Dense replicated object would exceed the memory guard."""


class ImpossibleRecordError(NumericalError):
    """Replayed jump record contains a jump of vanishing probability."""


class InfiniteCoefficientError(NumericalError):
    """Coefficient diverges (zero monitoring rate)."""


class ConstraintViolation(NumericalError):
    """A constructed rotation fails one of the labelled constraints."""

    def __init__(self, label: str, residual: float):
        super().__init__(f"constraint {label} violated: residual {residual:.3e}")
        self.label = label
        self.residual = residual


class PrecisionWarning(UserWarning):
    """Singular-value gap too small to trust a numerical rank."""
