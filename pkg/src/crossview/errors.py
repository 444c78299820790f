"""Exception types shared across the package."""


class ConfigError(ValueError):
    """A configuration value is missing, unknown, or out of its valid range."""


class ShapeError(ValueError):
    """Array arguments have incompatible or unexpected shapes."""


class DomainError(ValueError):
    """A numeric argument violates a mathematical precondition."""


class OutOfBoundsError(ValueError):
    """A requested sample footprint leaves the world extent."""


class TrainingError(RuntimeError):
    """Training diverged or was otherwise unable to proceed."""
