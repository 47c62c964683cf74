"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Inputs violate a documented precondition."""


class FormatError(ValueError):
    """A file on disk does not follow its declared format."""

    def __init__(self, message, *, line=None, offset=None):
        if line is not None:
            message = f"line {line}: {message}"
        if offset is not None:
            message = f"byte offset {offset}: {message}"
        super().__init__(message)
        self.line = line
        self.offset = offset
