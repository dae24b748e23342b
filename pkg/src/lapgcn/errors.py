"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class NumericalError(ArithmeticError):
    """A computation produced non-finite values or failed to converge.

    The message names the pipeline stage so training aborts loudly
    instead of silently propagating NaNs.
    """


class ConfigError(ValueError):
    """A config file, key, or CLI argument is invalid."""
