"""Exception types shared across the toolkit."""

from __future__ import annotations


class ToolkitError(Exception):
    """Base class for errors raised by this package."""


class ParseError(ToolkitError, ValueError):
    """Malformed input.

    ``position`` is a byte offset within the record for line-delimited
    measurement feeds, and a 1-based line number for traceroute text and
    other multi-line inputs.
    """

    def __init__(self, position: int, reason: str):
        super().__init__(f"parse error at {position}: {reason}")
        self.position = position
        self.reason = reason


class NoDataError(ToolkitError):
    """A measurement sample carried no successful runs."""


class EmptyInputError(ToolkitError):
    """An operation that needs at least one sample received none."""


class InvalidAddressError(ToolkitError, ValueError):
    """Input is not a syntactically valid IPv4 address."""
