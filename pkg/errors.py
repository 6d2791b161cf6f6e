"""
errors.py

Exception hierarchy shared by every module of the toolkit.

Each error also derives from the closest builtin so callers that only know
about ValueError / RuntimeError still catch it.
"""


class LpdpError(Exception):
    """Base class for all toolkit errors."""


class InvalidSequenceError(LpdpError, ValueError):
    """Sequence contains a non-ACGT symbol or violates its length bounds."""


class InvalidActionError(LpdpError, ValueError):
    """Edit action is not valid for the sequence it is applied to."""


class EmptyActionSetError(LpdpError, RuntimeError):
    """No valid edit action exists at a state."""


class OracleError(LpdpError, ValueError):
    """Reward oracle cannot score the sequence (e.g. junction window out of range)."""


class EnumerationGuardError(LpdpError, RuntimeError):
    """Exhaustive enumeration would exceed its hard size guard."""

    def __init__(self, what: str, predicted: int, limit: int):
        self.predicted = predicted
        self.limit = limit
        super().__init__(f"{what}: predicted {predicted} exceeds guard {limit}")


class ConfigError(LpdpError, ValueError):
    """Experiment configuration is invalid or inconsistent."""


class MetricError(LpdpError, ValueError):
    """Metric undefined for its input (empty distribution, empty trajectory)."""
