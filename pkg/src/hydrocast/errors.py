"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 1 (usage),
DataError -> 2 (bad input data), NumericalError -> 3 (numerical failure).
"""


class ConfigError(ValueError):
    """Invalid configuration or argument combination."""


class DataError(ValueError):
    """Input data violates a documented contract (format, range, coverage)."""


class NumericalError(RuntimeError):
    """A numerical computation produced NaN/Inf or failed a correctness gate."""
