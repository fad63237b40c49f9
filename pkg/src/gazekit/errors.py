"""Exception types shared across the toolkit.

All gazekit errors derive from :class:`GazekitError` so callers can catch
the whole family with one clause.  Input-validation failures additionally
derive from :class:`ValueError` to stay friendly to generic callers.
"""

from __future__ import annotations


class GazekitError(Exception):
    """Base class for all gazekit errors."""


class InvalidInputError(GazekitError, ValueError):
    """An argument violates a documented precondition or invariant."""


class FormatError(GazekitError, ValueError):
    """A file does not match the expected on-disk format.

    Carries the offending path so batch tools can report per-file failures.
    """

    def __init__(self, message: str, path: str | None = None):
        self.path = path
        super().__init__(message if path is None else f"{path}: {message}")


class MalformedResponseError(GazekitError, ValueError):
    """A model response string does not follow the token grammar.

    ``offset`` is the character position where parsing failed.
    """

    def __init__(self, message: str, offset: int = 0):
        self.offset = offset
        super().__init__(f"{message} (offset {offset})")


class UndefinedMetricError(GazekitError, ArithmeticError):
    """A metric has no defined value for the given inputs."""
