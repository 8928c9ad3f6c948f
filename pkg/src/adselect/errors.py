"""Exception types shared across modules."""


class AdSelectError(Exception):
    """Base class for package errors."""


class DataError(AdSelectError):
    """Malformed input data (CSV parse failures, label violations, ...)."""


class ConfigError(AdSelectError):
    """Invalid run configuration or detector configuration."""


class FitError(AdSelectError):
    """A detector cannot be fitted on the given data (e.g. too few rows)."""


class ModelFormatError(AdSelectError):
    """A persisted model file is missing, corrupt, or of the wrong version."""
