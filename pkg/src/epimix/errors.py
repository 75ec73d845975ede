"""Exception types shared across the package."""


class EpimixError(Exception):
    """Base class for all package errors."""


class DataError(EpimixError):
    """Malformed or inconsistent input data (bad file, bad value, bad index)."""


class ConfigError(EpimixError):
    """Invalid run configuration or usage."""


class NumericalError(EpimixError):
    """Numerical failure: overflow, non-SPD matrix, exhausted stick, etc."""
