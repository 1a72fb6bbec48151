class HfNoiseError(Exception):
    """Base class for package errors."""


class ConfigError(HfNoiseError, ValueError):
    """Invalid or incomplete configuration (CLI exit code 2)."""


class GeometryError(HfNoiseError, ValueError):
    """Pre-averaging block geometry does not fit the series."""


class EstimationError(HfNoiseError, RuntimeError):
    """An estimator could not be evaluated on the given data (CLI exit code 3)."""
