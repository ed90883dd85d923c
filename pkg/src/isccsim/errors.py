"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration; message names the offending field."""


class SchemaError(ValueError):
    """Input file (config or CSV) does not match the documented schema."""


class InfeasibleModeError(RuntimeError):
    """An execution mode was requested that the current rates cannot support."""


class InputError(ValueError):
    """Non-finite or otherwise unusable solver input."""
