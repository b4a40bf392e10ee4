"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid dimensions, parameters or config keys."""

    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}")


class NumericalError(ArithmeticError):
    """A matrix that must be positive definite or invertible was not."""

    def __init__(self, message, condition=None):
        self.condition = condition
        if condition is not None:
            message = f"{message} (condition number {condition:.3e})"
        super().__init__(message)


class UsageError(RuntimeError):
    """An operation was called in a state that does not allow it."""


class ResetError(RuntimeError):
    """Environment reset could not find an admissible configuration."""


class TrainingError(RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, message, snapshot=None):
        self.snapshot = snapshot or {}
        super().__init__(message)
