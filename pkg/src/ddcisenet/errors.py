"""Exception types raised across the package."""


class DDError(Exception):
    """Base class for all package errors."""


class ShapeError(DDError, ValueError):
    pass


class ParameterError(DDError, ValueError):
    pass


class TapeError(DDError, RuntimeError):
    """Backward call did not match the most recent forward node on the tape."""


class FormatError(DDError, ValueError):
    """Malformed or incompatible tensor / checkpoint file."""


class ConfigMismatchError(FormatError):
    pass


class UndefinedMetricError(DDError, ValueError):
    pass


class DegenerateTestError(DDError, ValueError):
    pass


class NonFiniteLossError(DDError, FloatingPointError):
    pass
