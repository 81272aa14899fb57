"""Exception taxonomy shared across the toolkit.

Each class maps onto one CLI exit code so failures are scriptable:
ConfigurationError -> 2, DataError -> 3, DivergenceError -> 4.
"""


class TdtwinError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1


class ConfigurationError(TdtwinError):
    """Invalid configuration: bad schema, dimension mismatch, unusable plan."""

    exit_code = 2


class DataError(TdtwinError):
    """Invalid data: malformed files, inconsistent datasets, misaligned series."""

    exit_code = 3


class DivergenceError(TdtwinError):
    """Numerical divergence: integration blowup, non-finite rollout or loss."""

    exit_code = 4
