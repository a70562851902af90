"""Exception hierarchy shared by every module."""


class ChanpriceError(Exception):
    """Base class for all package errors."""


class ConfigurationError(ChanpriceError, ValueError):
    """Inputs violate a dimension, range or ordering requirement."""


class SingularityError(ChanpriceError, ArithmeticError):
    """A matrix that must be inverted is singular or nearly so."""


class ConvergenceError(ChanpriceError, RuntimeError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ConsistencyError(ChanpriceError, RuntimeError):
    """An internal invariant (ordering, monotone policy row) was broken."""


class StructuralPropertyError(ChanpriceError, AssertionError):
    """A structural result (superadditivity, threshold monotonicity) failed.

    ``location`` carries the offending ``(stage, state_index)`` pair.
    """

    def __init__(self, message, location=None):
        super().__init__(message)
        self.location = location


class ObservabilityWarning(UserWarning):
    """(A, C) is not observable but the unobservable part is stable."""
