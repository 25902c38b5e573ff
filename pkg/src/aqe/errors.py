"""Exception hierarchy shared across the package."""


class AQEError(Exception):
    pass


class InvalidArgument(AQEError, ValueError):
    pass


class ShapeError(AQEError, ValueError):
    pass


class InvalidState(AQEError, RuntimeError):
    pass


class NumericError(AQEError, ArithmeticError):
    """Raised when a loss, gradient or target becomes non-finite."""


class UnsupportedFeature(AQEError, NotImplementedError):
    pass


class ConfigError(AQEError, ValueError):
    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key
