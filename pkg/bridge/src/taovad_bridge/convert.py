"""Raw pixel annotations to the normalized graymap directory the engine ingests.

Two source layouts:
  - one .npy file holding a (frames, height, width) volume, or
  - a directory of per-frame 2-D .npy arrays, ordered by file name.

Nonzero means anomalous. Output is 000000.pgm .. N-1 zero-padded, binary P5,
255 for anomalous pixels. An empty source produces an empty directory.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from . import formats
from .errors import ConversionError


def _load_volume(source: Path) -> list[np.ndarray]:
    try:
        data = np.load(source, allow_pickle=False)
    except ValueError as exc:
        raise ConversionError(f"{source}: not a loadable array: {exc}") from None
    if data.ndim != 3:
        raise ConversionError(
            f"{source}: expected a (frames, height, width) volume, got shape {data.shape}"
        )
    return [data[i] for i in range(data.shape[0])]


def _load_frame_dir(source: Path) -> list[np.ndarray]:
    frames = []
    for path in sorted(source.glob("*.npy")):
        try:
            arr = np.load(path, allow_pickle=False)
        except ValueError as exc:
            raise ConversionError(f"{path}: not a loadable array: {exc}") from None
        if arr.ndim != 2:
            raise ConversionError(f"{path}: expected a 2-D frame, got shape {arr.shape}")
        frames.append(arr)
    shapes = {f.shape for f in frames}
    if len(shapes) > 1:
        raise ConversionError(f"{source}: frames disagree on geometry: {sorted(shapes)}")
    return frames


def convert_annotations(source: Path, out_dir: Path) -> int:
    """Normalize raw annotations into a graymap directory; returns frame count."""
    source = Path(source)
    if source.is_dir():
        frames = _load_frame_dir(source)
    elif source.is_file():
        frames = _load_volume(source)
    else:
        raise ConversionError(f"{source}: no such file or directory")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for idx, frame in enumerate(frames):
        bits = np.asarray(frame) != 0
        formats.write_pgm(out_dir / f"{idx:06d}.pgm", bits.astype(np.uint8) * 255)
    return len(frames)
