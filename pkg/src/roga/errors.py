"""Exception hierarchy shared across the package."""


class RogaError(Exception):
    """Base class for all package errors."""


class DimensionError(RogaError, ValueError):
    """Vectors, parameters or features of incompatible shape were combined."""


class NumericError(RogaError, ArithmeticError):
    """A loss, gradient or parameter became non-finite."""


class ConfigError(RogaError, ValueError):
    """An experiment configuration is invalid."""


class DegenerateInputError(RogaError, ValueError):
    """Input is empty or lacks a class a metric needs."""
