class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


class DivergenceError(FloatingPointError):
    """A network produced non-finite values."""
