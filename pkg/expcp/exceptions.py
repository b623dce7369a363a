"""
Error hierarchy shared by the library and the command line.
"""

from typing import Optional


class ExpcpError(Exception):
    """Base class for every error raised on purpose by expcp."""


class InputError(ExpcpError, ValueError):
    """Rejected input: invalid samples, parameters or files."""


class ScanRangeError(InputError):
    """The trimmed scan set N(epsilon) is empty for the sample length."""

    def __init__(self, K: int, epsilon: float, minimum_K: int):
        self.K = K
        self.epsilon = epsilon
        self.minimum_K = minimum_K
        super().__init__(
            f"Scan set N(epsilon={epsilon}) is empty for K={K}; "
            f"every K >= {minimum_K} has a nonempty scan set"
        )


class AsymptoticValueUnavailable(InputError):
    """No stored asymptotic critical value for the requested level."""


class TableFormatError(InputError):
    """Malformed critical-value table file."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(f"{prefix}{message}")


class MissingCriticalValueError(ExpcpError, LookupError):
    """A critical value needed for a decision is not available."""
