"""Shared error types with distinct CLI exit codes."""


class BudgetError(ValueError):
    """A computation exceeded an explicit size/enumeration budget (exit 3)."""


class InequalityViolation(AssertionError):
    """A certified inequality check failed (exit 1)."""
