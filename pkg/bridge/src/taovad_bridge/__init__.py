"""Adapter between real detector/segmenter models and the taovad engine.

The engine side stays model-free; this package sits on the model side and
speaks only the engine's on-disk formats and its tao-seg/1 subprocess
protocol. Nothing here imports the engine: byte-level format compatibility
is the whole contract, and the conformance tests enforce it from the
outside.

Every operation has a stub mode with no ML dependencies, so the full wire
surface is exercisable offline. Real model adapters register themselves in
the DETECTORS / SEGMENTERS registries.
"""

from .config import BridgeConfig
from .errors import BridgeError, ConfigError, ConversionError

__all__ = ["BridgeConfig", "BridgeError", "ConfigError", "ConversionError"]
