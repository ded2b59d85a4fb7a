"""
Error hierarchy for the forecasting toolkit
Every error carries the process exit code the CLI reports
"""


class StlgslError(Exception):
    """Base error with a process exit code"""

    exit_code: int = 1


class ConfigError(StlgslError):
    """Invalid run configuration or config/checkpoint mismatch"""

    exit_code = 2


class DimensionError(StlgslError, ValueError):
    """Tensor or matrix shapes do not agree"""

    exit_code = 2


class DataError(StlgslError):
    """Malformed, missing or insufficient data"""

    exit_code = 3


class NumericError(StlgslError):
    """Non-finite values during optimization"""

    exit_code = 4


class AutodiffError(StlgslError):
    """Backward pass requested on an invalid loss"""

    exit_code = 4
