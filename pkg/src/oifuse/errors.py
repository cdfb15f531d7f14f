"""Exception types shared across the package.

Everything derives from OifuseError so callers can catch the package's
failures in one clause; each class also subclasses ValueError because
these are, without exception, complaints about caller-supplied data.
"""


class OifuseError(Exception):
    """Base class for all errors raised by this package."""


class LengthMismatchError(OifuseError, ValueError):
    """Parallel sequences passed to a filter run have different lengths."""


class EmptyArchiveError(OifuseError, ValueError):
    """No valid composite value anywhere in the requested archive window."""


class GeometryMismatchError(OifuseError, ValueError):
    """Grids that must share shape and georeference do not."""


class NoOverlapError(OifuseError, ValueError):
    """Coarse and fine footprints are disjoint; collocation is impossible."""


class UnsortedInputError(OifuseError, ValueError):
    """Records that must arrive in (year, month) order do not."""


class InsufficientDataError(OifuseError, ValueError):
    """Too few valid observations to run the requested procedure."""


class EmptyInputError(OifuseError, ValueError):
    """An aggregate was requested over zero elements."""


class ConfigError(OifuseError, ValueError):
    """A configuration file or parameter set fails validation."""
