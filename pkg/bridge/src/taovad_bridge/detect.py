"""Detection export: frames in, a tao-det/1 file out.

A detector is a callable taking the frame stack (list of 2-D uint8 arrays)
and returning detection records {"frame", "box", "label", "score"}. The
built-in stub thresholds pixel intensity and boxes the connected bright
components, scoring each by its mean intensity; it exists so the export
path runs with no model downloads. Real detectors register under their own
spec string in DETECTORS.
"""

from __future__ import annotations

from collections import deque
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import formats
from .errors import ConfigError, ConversionError


def _components(bits: np.ndarray) -> list[list[tuple[int, int]]]:
    """4-connected components as (y, x) pixel lists, in scan order."""
    height, width = bits.shape
    seen = np.zeros_like(bits, dtype=bool)
    out = []
    for sy, sx in zip(*np.nonzero(bits)):
        if seen[sy, sx]:
            continue
        queue = deque([(int(sy), int(sx))])
        seen[sy, sx] = True
        pixels = []
        while queue:
            y, x = queue.popleft()
            pixels.append((y, x))
            for ny, nx in ((y - 1, x), (y + 1, x), (y, x - 1), (y, x + 1)):
                if 0 <= ny < height and 0 <= nx < width and bits[ny, nx] and not seen[ny, nx]:
                    seen[ny, nx] = True
                    queue.append((ny, nx))
        out.append(pixels)
    return out


def stub_detector(
    frames: Sequence[np.ndarray], *, threshold: int = 128, score_scale: float = 3.0
) -> list[dict]:
    if not isinstance(threshold, int) or not (0 <= threshold <= 255):
        raise ConfigError(f"threshold must be an int in [0, 255], got {threshold!r}")
    if not isinstance(score_scale, (int, float)) or not (0 < score_scale < float("inf")):
        raise ConfigError(f"score_scale must be a positive number, got {score_scale!r}")
    records = []
    for frame_idx, gray in enumerate(frames):
        for pixels in _components(gray > threshold):
            ys = [p[0] for p in pixels]
            xs = [p[1] for p in pixels]
            mean = float(np.mean([gray[y, x] for y, x in pixels]))
            records.append(
                {
                    "frame": frame_idx,
                    "box": [
                        float(min(xs)),
                        float(min(ys)),
                        float(max(xs) + 1),
                        float(max(ys) + 1),
                    ],
                    "label": "object",
                    "score": mean / 255.0 * float(score_scale),
                }
            )
    return records


DETECTORS: dict[str, Callable[..., list[dict]]] = {"stub": stub_detector}


def load_frames(dataset: Path) -> list[np.ndarray]:
    """Grayscale frame stack from a directory of .pgm files, sorted by name."""
    paths = sorted(dataset.glob("*.pgm"))
    frames = [formats.read_pgm(p) for p in paths]
    shapes = {f.shape for f in frames}
    if len(shapes) > 1:
        raise ConversionError(f"{dataset}: frames disagree on geometry: {sorted(shapes)}")
    return frames


def export_detections(
    dataset: Path, out: Path, *, detector: str = "stub", **options
) -> int:
    """Run a detector over a clip directory and write a tao-det/1 file.

    Returns the record count. An empty clip writes a header-only file with
    vacuous 1x1 geometry, since there is no frame to take geometry from.
    """
    if detector not in DETECTORS:
        raise ConfigError(
            f"unknown detector spec {detector!r}; built in: {sorted(DETECTORS)} "
            "(real adapters must register in taovad_bridge.detect.DETECTORS)"
        )
    frames = load_frames(dataset)
    records = DETECTORS[detector](frames, **options)
    if frames:
        height, width = frames[0].shape
    else:
        width = height = 1
    formats.write_detections_file(
        out, records, frames=len(frames), width=width, height=height
    )
    return len(records)
