class UnsupportedOperation(RuntimeError):
    """Operation not available for this model configuration."""


class ConfigError(ValueError):
    """Inconsistent or unknown configuration."""


class FormatError(ValueError):
    """Malformed, truncated or version-mismatched file."""
