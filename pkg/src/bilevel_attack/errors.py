"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Array shape does not match what the operation requires."""


class ConfigurationError(ValueError):
    """Invalid hyperparameter, loss kind, or config file content."""


class DataError(ValueError):
    """Degenerate or empty dataset input."""


class NumericalError(RuntimeError):
    """Non-finite value encountered; message carries the step index."""


class EvaluationError(ValueError):
    """Attack-success-rate denominator is empty for a model."""
