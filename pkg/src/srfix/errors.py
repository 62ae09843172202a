"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 1, DataError -> 2,
any other SrfixError -> 3.
"""


class SrfixError(Exception):
    """Base class for all package-specific errors."""


class ParseError(SrfixError):
    """Expression text could not be parsed; carries the offending position."""

    def __init__(self, message: str, position: int | None = None):
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)
        self.position = position


class ConfigError(SrfixError):
    """Invalid experiment configuration or operator/LUT setup."""


class DataError(SrfixError):
    """Dataset could not be loaded or violates its contract."""


class CostModelError(SrfixError):
    """Uncosted operator or missing precision bucket in the cost tables."""


class SearchError(SrfixError):
    """Search produced no usable result (e.g. empty hall of fame)."""


class MetricsError(SrfixError):
    """A metric is undefined for the given inputs (e.g. single-class AUC)."""
