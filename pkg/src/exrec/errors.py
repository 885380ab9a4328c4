"""Exception types shared across the package."""


class NotTrainableError(TypeError):
    """Raised when a gradient operation is requested on a non-trainable model."""


class SessionLengthError(ValueError):
    """Raised when a session is too long for exhaustive enumeration."""


class EmptyDatasetError(ValueError):
    """Raised when preprocessing leaves no usable sessions."""


class StageDependencyError(RuntimeError):
    """Raised when a pipeline stage runs before its inputs exist."""


class ConfigError(ValueError):
    """Raised for unknown or out-of-range configuration values."""
