"""Exception types shared across the package."""

from __future__ import annotations


class ConfigError(ValueError):
    """A configuration value is missing, malformed, or out of range."""

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class ContractViolation(ValueError):
    """A caller broke an operation's precondition."""


class InvariantViolation(AssertionError):
    """Internal bookkeeping is inconsistent. Always a bug."""


class NumericalDivergence(FloatingPointError):
    """The learner produced a non-finite TD error or weight."""

    def __init__(self, step: int, detail: str = "", context: dict | None = None):
        self.step = step
        self.detail = detail
        self.context = context or {}
        msg = f"non-finite value at step {step}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)
