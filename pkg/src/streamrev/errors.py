"""Exception types shared across the package."""


class StreamrevError(Exception):
    """Base class for every error raised by streamrev."""


class InvalidArgument(StreamrevError, ValueError):
    pass


class FormatError(StreamrevError, ValueError):
    """A file does not follow the expected binary or text layout."""


class NumericError(StreamrevError, ArithmeticError):
    pass


class DomainError(StreamrevError, ValueError):
    """Input lies outside the domain where a closed-form model is defined."""


class StreamrevIOError(StreamrevError, OSError):
    def __init__(self, path, reason):
        super().__init__(f"{path}: {reason}")
        self.path = str(path)
