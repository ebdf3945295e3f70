"""Exception hierarchy shared across the toolkit.

The CLI maps these to exit codes: ConfigError -> 2, DataError -> 3,
NumericError -> 4.
"""


class GelatoError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(GelatoError):
    """Invalid configuration or argument combination."""


class DataError(GelatoError):
    """Malformed, inconsistent, or unreadable input data."""


class NumericError(GelatoError):
    """Numerical failure: non-finite scores, invalid transition rows, ..."""
