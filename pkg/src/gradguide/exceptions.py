"""Exception types raised across the package."""


class UsageError(ValueError):
    """Bad arguments: shape mismatch, out-of-range class index, empty input."""


class DegenerateGradientError(ArithmeticError):
    """Raised when a direction is requested from an all-zero gradient."""


class ParseError(ValueError):
    """Malformed file contents.

    ``offset`` is the byte position (or record index, for record-oriented
    formats) where parsing stopped.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at offset {offset})"
        super().__init__(message)
        self.offset = offset


class LineSearchError(RuntimeError):
    """No step size satisfied the sufficient-decrease condition."""
