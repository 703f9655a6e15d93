"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Tensor shapes are inconsistent for the requested operation."""


class NumericError(ArithmeticError):
    """A computation produced or received non-finite / invalid values."""


class ConfigurationError(ValueError):
    """A configuration value violates a documented constraint."""


class OptimizerError(RuntimeError):
    """Optimizer state and parameters are out of sync (e.g. missing gradient)."""


class DataFormatError(ValueError):
    """An on-disk container failed to parse or violates its header invariants."""
