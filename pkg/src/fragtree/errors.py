"""Exception types shared across the package."""


class FragtreeError(Exception):
    """Base class for all package errors."""


class ValidationError(FragtreeError, ValueError):
    """An input value violates a documented precondition."""


class ConfigError(FragtreeError, ValueError):
    """A requested configuration is unusable (bad measure setup, missing rate, ...)."""


class ParseError(FragtreeError, ValueError):
    """Malformed serialized input. Carries the offending position when known."""

    def __init__(self, message: str, position: int | None = None):
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)
        self.position = position


class InvariantViolation(FragtreeError, AssertionError):
    """A structural invariant that should hold exactly was found broken."""
