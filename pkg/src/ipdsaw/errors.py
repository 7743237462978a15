"""Exception types shared across the toolkit."""


class IpdsawError(Exception):
    """Base class for all toolkit errors."""


class DomainError(IpdsawError, ValueError):
    """Parameter outside its mathematical domain (beta <= 0, nonpositive scale, ...)."""


class ValidationError(IpdsawError, ValueError):
    """Structurally invalid input (non-self-avoiding path, mismatched areas, ...)."""


class SizeError(IpdsawError):
    """Exact enumeration or DP request beyond the configured budget."""


class RangeError(IpdsawError):
    """Query outside the computed domain (e.g. inverse-clock query past the horizon)."""


class BudgetError(IpdsawError):
    """Rejection sampler exhausted its attempt budget.

    Carries the number of attempts actually consumed so callers can report
    acceptance statistics even on failure.
    """

    def __init__(self, message: str, attempts: int):
        super().__init__(message)
        self.attempts = attempts
