"""Exception hierarchy shared across the package.

The CLI maps these onto distinct exit codes, so library code should raise
the most specific class that applies: I/O problems surface as the builtin
``OSError`` family, bad inputs as :class:`ValidationError` (or a subclass),
and numerical breakdowns as :class:`NumericError`.
"""


class ValidationError(ValueError):
    """Input violates a documented precondition or invariant."""


class ShapeError(ValidationError):
    """Array dimensions do not match what an operation expects."""

    def __init__(self, what: str, expected, actual):
        super().__init__(f"{what}: expected {expected}, got {actual}")
        self.expected = expected
        self.actual = actual


class DataFormatError(ValidationError):
    """A data file does not conform to its declared format."""

    def __init__(self, path, line: int | None, message: str):
        where = f"{path}" if line is None else f"{path}:{line}"
        super().__init__(f"{where}: {message}")
        self.path = str(path)
        self.line = line


class NumericError(RuntimeError):
    """A computation produced (or was handed) non-finite values."""
