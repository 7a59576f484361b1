"""Exception types shared across the package."""


class NumericalFailure(RuntimeError):
    """A numerical routine failed to converge or exceeded its error budget."""


class ConfigError(ValueError):
    """A model configuration could not be parsed into valid objects."""
