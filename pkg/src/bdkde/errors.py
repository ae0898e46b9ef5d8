"""Exception types shared across the package."""


class BdkdeError(Exception):
    """Base class for all package errors."""


class InputError(BdkdeError):
    """Invalid argument or malformed input."""


class ConfigError(InputError):
    """Bad or inconsistent experiment configuration."""


class CapabilityError(InputError):
    """Operation outside a model's declared capabilities."""


class NumericalError(BdkdeError):
    """Base class for failures of the numerics rather than the inputs."""


class DivergenceError(NumericalError):
    """An integral or moment appears to diverge."""


class SingularMatrixError(NumericalError):
    """Moment matrix is numerically singular (reciprocal condition below threshold)."""


class ConsistencyError(NumericalError):
    """Internal verification of a constructed object failed beyond tolerance."""


class WitnessError(NumericalError):
    """A Lipschitz witness failed its numerical spot-check."""


class AccuracyError(NumericalError):
    """Requested accuracy was not reached.

    Carries the best available estimate so callers can degrade gracefully
    instead of discarding the computation.
    """

    def __init__(self, message: str, value: float | None = None, error: float | None = None):
        super().__init__(message)
        self.value = value
        self.error = error
