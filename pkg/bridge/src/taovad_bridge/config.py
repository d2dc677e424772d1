from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError


@dataclass(frozen=True)
class BridgeConfig:
    """Resolved settings for one bridge invocation.

    detector/segmenter are registry spec strings ("stub" ships built in;
    real adapters add their own keys). device is a hint passed through to
    model adapters; the stubs ignore it. Input paths must exist at
    construction time, output paths are the caller's responsibility.
    """

    detector: str = "stub"
    segmenter: str = "stub"
    device: str = "cpu"
    dataset: Path | None = None
    source: Path | None = None
    out: Path | None = None
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("detector", "segmenter", "device"):
            value = getattr(self, name)
            if not isinstance(value, str) or not value:
                raise ConfigError(f"{name} must be a non-empty string, got {value!r}")
        for name in ("dataset", "source"):
            value = getattr(self, name)
            if value is None:
                continue
            path = Path(value)
            if not path.exists():
                raise ConfigError(f"{name} path does not exist: {path}")
            object.__setattr__(self, name, path)
        if self.out is not None:
            object.__setattr__(self, "out", Path(self.out))
