"""Exception types shared across the toolkit."""

from __future__ import annotations


class RankforgeError(Exception):
    """Base class for all toolkit errors."""


class ParseError(RankforgeError):
    """Malformed input data; carries the offending line number when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DataError(RankforgeError):
    """Valid syntax but inconsistent content (missing docs, mismatched query sets, ...)."""
