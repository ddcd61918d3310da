"""Exception types shared across the package."""


class StackNetError(Exception):
    """Base class for all errors raised by stacknet."""


class KindMismatchError(StackNetError, TypeError):
    """Operation called on a table of the wrong kind (regression vs classification)."""


class InvalidRangeError(StackNetError, ValueError):
    pass


class ShapeError(StackNetError, ValueError):
    pass


class InsufficientDataError(StackNetError, ValueError):
    pass


class DivergenceError(StackNetError, ArithmeticError):
    """Training produced a non-finite loss."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class NumericalError(StackNetError, ArithmeticError):
    pass


class ConfigError(StackNetError, ValueError):
    pass


class ParseError(StackNetError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class SchemaError(StackNetError, ValueError):
    pass


class UnsupportedCardinalityError(StackNetError, ValueError):
    pass


class NoSignalError(StackNetError, ValueError):
    pass


class MissingOracleError(StackNetError, ValueError):
    pass
