"""Exception types shared across the package."""


class BasinControlError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(BasinControlError):
    """A vector or matrix has the wrong length/shape for the system."""


class NonFiniteOutput(BasinControlError):
    """A model evaluation (rhs, Jacobian, constraint map) produced NaN/Inf."""


class NonFiniteInput(BasinControlError):
    """An input vector or matrix contains NaN/Inf."""


class NonFiniteState(BasinControlError):
    """Integration blew up: the state became non-finite at some step.

    Attributes
    ----------
    step : index of the first offending step
    state : the offending state vector
    """

    def __init__(self, message, step=None, state=None):
        super().__init__(message)
        self.step = step
        self.state = state


class UnknownModel(BasinControlError):
    """Requested model name is not in the registry."""


class BadTopology(BasinControlError):
    """Edge list references a node index outside the system dimension."""


class IneligibleStart(BasinControlError):
    """The unperturbed initial state already violates the constraints."""


class GenerationFailed(BasinControlError):
    """The benchmark generator could not build a valid instance."""


class ParseError(BasinControlError):
    """A config or data file is malformed."""


class ValidationError(BasinControlError):
    """A parsed config violates a parameter or dimension invariant."""
