"""Exception hierarchy shared by the library and the command line."""

from __future__ import annotations


class FlexskyError(Exception):
    """Base class for all errors raised by flexsky."""


class DomainError(FlexskyError, ValueError):
    """An argument lies outside the domain of a numeric routine."""


class TransformError(FlexskyError, ValueError):
    """A transform was applied to a value or attribute it does not accept."""


class SchemaMismatchError(FlexskyError, ValueError):
    """A relation does not conform to the schema of a scoring family."""


class InfeasibleFamilyError(FlexskyError, ValueError):
    """The weight constraints admit no weight vector."""


class UnsupportedDimensionError(FlexskyError, ValueError):
    """Vertex enumeration was asked for more attributes than it supports."""


class LpStructureError(FlexskyError, ValueError):
    """A linear program has inconsistent dimensions."""


class NumericalFailure(FlexskyError, ArithmeticError):
    """A numeric routine could not produce a certified answer."""


class DataError(FlexskyError, ValueError):
    """An input file is malformed or holds out-of-domain values."""


class QuerySpecError(FlexskyError, ValueError):
    """A query document is malformed. ``field`` addresses the offending entry."""

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)
