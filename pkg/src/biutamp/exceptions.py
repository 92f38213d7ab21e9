"""Exception types raised by the solvers and helpers."""


class BiUtampError(Exception):
    """Base class for all package errors."""


class DimensionError(BiUtampError, ValueError):
    """Inputs have incompatible shapes."""


class DomainError(BiUtampError, ValueError):
    """A parameter lies outside its admissible range."""


class NumericError(BiUtampError, ArithmeticError):
    """A numerical routine received or produced non-finite values."""


class DegenerateModelError(BiUtampError, ArithmeticError):
    """The model carries no information (e.g. all-zero spectrum or zero residual)."""


class DivergenceError(BiUtampError, ArithmeticError):
    """An iterative solver produced non-finite or exploding iterates.

    Attributes
    ----------
    iteration : int
        Index of the iteration at which divergence was detected.
    last_state : object
        The last finite state (solver specific), or ``None``.
    details : object
        Optional extra information, e.g. per-restart status.
    """

    def __init__(self, message, iteration=None, last_state=None, details=None):
        super().__init__(message)
        self.iteration = iteration
        self.last_state = last_state
        self.details = details
