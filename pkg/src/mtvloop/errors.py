"""Exception hierarchy shared across the package.

DataError maps to CLI exit code 2, NumericError to exit code 3.
"""


class MtvLoopError(Exception):
    """Base class for all package errors."""


class DataError(MtvLoopError):
    """Malformed datasets, checkpoints, bundles or on-disk artifacts."""


class NumericError(MtvLoopError):
    """Numerical failure during optimization (non-finite values)."""
