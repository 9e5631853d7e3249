"""Exception types shared across the package."""


class LSRNetError(Exception):
    """Base class for all package errors."""


class ContractViolation(LSRNetError, ValueError):
    """An operation was called outside its preconditions."""


class ConfigError(ContractViolation):
    """A model configuration cannot produce integral shapes."""

    def __init__(self, layer: str, message: str) -> None:
        super().__init__(f"{layer}: {message}")
        self.layer = layer


class NumericError(LSRNetError, ArithmeticError):
    """A kernel produced NaN or Inf."""


class FormatError(LSRNetError, ValueError):
    """A serialized stream is malformed, truncated or corrupted."""

    def __init__(self, message: str, offset: int | None = None) -> None:
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset
