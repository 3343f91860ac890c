"""Exception types shared across the package."""


class NadcError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(NadcError, ValueError):
    """An argument violates a documented precondition."""


class DomainError(NadcError, ValueError):
    """A value lies outside the domain of a function (e.g. a rail value passed to an inverse)."""


class NumericOverflowError(NadcError, ArithmeticError):
    """Integration produced a non-finite state."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class DataError(NadcError, ValueError):
    """A dataset is internally inconsistent."""


class MetricsError(NadcError, ValueError):
    """A transfer table cannot support the requested metric."""


class CalibrationError(NadcError, RuntimeError):
    """Reference calibration could not reach the requested staircase."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class ConfigError(NadcError, ValueError):
    """A run configuration failed to parse or validate."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field
