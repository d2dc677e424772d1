class BridgeError(Exception):
    """Base class for everything raised on purpose by this package."""


class ConfigError(BridgeError, ValueError):
    """Bad specs, missing paths, or invalid parameter values."""


class ConversionError(BridgeError, ValueError):
    """Source annotations cannot be normalized (shape, type, layout)."""
