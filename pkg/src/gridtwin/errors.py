"""Exception types shared across the package."""


class GridTwinError(Exception):
    """Base class for all package errors."""


class ConfigError(GridTwinError):
    """Invalid or inconsistent configuration."""


class InputError(GridTwinError):
    """Invalid operand passed to a computation."""


class IllegalActionError(GridTwinError):
    """Action rejected by the twin's legality checks."""


class SchemaError(GridTwinError):
    """File header or structure does not match the expected schema."""


class DataError(GridTwinError):
    """File parsed but violates a data invariant."""


class UnauthorizedAuthorError(GridTwinError):
    """Transaction author is not on the participant allow-list."""


class TrainingDivergedError(GridTwinError):
    """Loss became non-finite during training."""

    def __init__(self, epoch: int, message: str | None = None):
        self.epoch = epoch
        super().__init__(message or f"training diverged at epoch {epoch}")
