"""Exception types raised across the package."""


class DontError(Exception):
    """Base class for all package errors."""


class DimensionError(DontError):
    """Operands have incompatible shapes or dimensions."""


class ValidationError(DontError):
    """An input violates a documented precondition."""


class NotPsdError(ValidationError):
    """A matrix expected to be symmetric positive (semi)definite is not."""


class MaskError(ValidationError):
    """Sparse-mask fitting got degenerate labels or produced an unusable mask."""


class NotOnTapeError(DontError):
    """Gradient was requested for a value the tape never recorded."""


class DivergenceError(DontError):
    """A flow pass or training run produced non-finite or exploding values."""

    def __init__(self, message, step=None, iteration=None):
        super().__init__(message)
        self.step = step
        self.iteration = iteration


class ConvergenceError(DontError):
    """An iterative solver hit its iteration cap before reaching tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ConfigError(DontError):
    """An experiment config file failed schema validation."""
