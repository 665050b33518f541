"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """A game or experiment configuration is internally inconsistent."""


class InvalidKernelError(ValueError):
    """A transition-kernel component fails its normalization check."""


class BoundViolationError(ValueError):
    """A constructed reward exceeds the declared reward bound."""


class UnsupportedTargetError(ValueError):
    """A target function is outside the supported analytic family."""


class SizeError(ValueError):
    """A requested discretization exceeds the configured memory cap."""


class ShapeError(ValueError):
    """A table does not match the tabular game it is used with."""


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class MissingArtifactError(FileNotFoundError):
    """A referenced input file does not exist."""
