"""Shared exception types."""


class ExpertVoteError(Exception):
    """Base class for all engine errors."""


class ParseError(ExpertVoteError):
    """A text input file could not be parsed.

    Carries the 1-based line number of the offending line when known.
    """

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ValidationError(ExpertVoteError):
    """Input data violates a documented invariant."""


class FormatError(ExpertVoteError):
    """A binary file is malformed. Carries the byte offset when known."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"offset {offset}: {message}"
        super().__init__(message)
        self.offset = offset
