"""Exception types raised across the package."""


class InvalidArgumentError(ValueError):
    """Shapes or values that do not match a function's contract."""


class NumericError(ArithmeticError):
    """A NaN or Inf appeared where finite values are required."""


class PreconditionError(RuntimeError):
    """An operation was called in a state that does not support it."""


class ConfigError(ValueError):
    """Bad configuration; ``key`` names the offending entry."""

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key
