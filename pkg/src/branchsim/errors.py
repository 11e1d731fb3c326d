"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """A run was requested with inconsistent or out-of-range parameters."""


class NumericalError(RuntimeError):
    """A scheme produced a non-finite value; carries the offending step."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message if step is None else f"{message} (step {step})")
        self.step = step


class TruncatedPathError(RuntimeError):
    """An operation that needs a completed path was given a truncated one."""
