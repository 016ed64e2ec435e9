"""Exception types shared across the package."""


class LognsumError(Exception):
    pass


class InvalidParameterError(LognsumError, ValueError):
    """A distribution or configuration parameter is outside its valid range."""


class DomainError(LognsumError, ValueError):
    """A function was evaluated outside its domain (e.g. gamma <= 0)."""


class NumericFailureError(LognsumError, ArithmeticError):
    """Quadrature or root finding did not meet its tolerance.

    ``estimate`` carries the achieved error estimate when one is available.
    """

    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


class IllConditionedInversionError(NumericFailureError):
    """The Mellin line integral was truncated or sampled too coarsely."""


class UnsupportedError(LognsumError, NotImplementedError):
    """The requested method/size combination is not implemented."""


class TailUnderflowError(NumericFailureError):
    """A normalisation probability underflowed to zero in double precision."""


class NoRootError(NumericFailureError):
    """No sign change was found in the root bracket."""
