"""Exception hierarchy shared across the package."""


class BaeError(Exception):
    """Base class for all package errors."""


class DimensionError(BaeError, ValueError):
    pass


class NumericError(BaeError, ArithmeticError):
    pass


class ConfigError(BaeError, ValueError):
    pass


class TrainingError(BaeError):
    """Raised when a training loss becomes non-finite."""

    def __init__(self, message: str, step: int):
        super().__init__(f"{message} (step {step})")
        self.step = step


class FinderError(BaeError):
    """The learning-rate sweep never produced a decreasing loss."""


class FormatError(BaeError, ValueError):
    pass


class ParseError(BaeError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)
        self.line = line


class DegenerateInputError(BaeError, ValueError):
    pass
