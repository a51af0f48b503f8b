"""Exception hierarchy shared across the package.

Every error raised by this package derives from GPartError so callers can
catch one type at the boundary. The subclasses mirror the CLI exit codes:
configuration problems, numeric failures, and malformed files each get
their own class so the front end can map them without string matching.
"""


class GPartError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(GPartError):
    """An argument or invariant check failed."""


class ConfigError(GPartError):
    """A run configuration is malformed or inconsistent."""


class CompatibilityError(GPartError):
    """A stored artifact does not match the model it is applied to."""


class FormatError(GPartError):
    """A file does not conform to its declared binary or text format."""


class NumericError(GPartError):
    """A computation produced non-finite or out-of-tolerance values."""
