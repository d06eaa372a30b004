"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid user-supplied configuration: bad flag value, unknown name, bad field."""


class FormatError(ValueError):
    """Malformed, truncated, or wrong-magic artifact file."""


class DegenerateGradientError(RuntimeError):
    """A matched-filter direction has zero norm, so no unit vector exists."""
