"""Exception types raised across the package."""


class RotchainError(Exception):
    """Base class for all package errors."""


class InvalidInputError(RotchainError, ValueError):
    pass


class EpisodeExhaustedError(RotchainError):
    """Raised when stepping an environment past its episode length."""


class EmptyBufferError(RotchainError):
    pass


class ConfigurationError(RotchainError):
    """Raised when a policy set or config cannot serve the requested work."""


class LoadError(RotchainError):
    """Raised when a checkpoint, test set or report file fails validation."""
