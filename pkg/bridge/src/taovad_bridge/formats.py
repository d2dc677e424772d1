"""The engine's wire formats, reimplemented on the model side.

Line-delimited JSON with compact separators and canonical record order, RLE
run lists over the row-major pixel stream, and binary 8-bit graymaps. The
byte output must match what the engine's own writers would produce for the
same values; the conformance tests parse everything back with the engine.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConversionError

DETECTIONS_FORMAT = "tao-det/1"
PROTOCOL_VERSION = "tao-seg/1"


def json_line(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), allow_nan=False)


def rle_runs(bits: np.ndarray) -> list[int]:
    """Alternating zero/one run lengths; the leading zero run may be 0."""
    flat = np.asarray(bits, dtype=bool).ravel()
    if flat.size == 0:
        raise ConversionError("cannot run-length encode an empty mask")
    changes = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], changes, [flat.size]))
    runs = [int(n) for n in np.diff(bounds)]
    if flat[0]:
        runs.insert(0, 0)
    return runs


def rect_bits(
    width: int, height: int, box: Sequence[float]
) -> np.ndarray:
    """Pixel cells a box overlaps with positive area, clipped to the frame."""
    x1, y1, x2, y2 = box
    bits = np.zeros((height, width), dtype=bool)
    x0 = max(0, int(np.floor(x1)))
    y0 = max(0, int(np.floor(y1)))
    x3 = min(width, int(np.ceil(x2)))
    y3 = min(height, int(np.ceil(y2)))
    if x0 < x3 and y0 < y3:
        bits[y0:y3, x0:x3] = True
    return bits


def write_detections_file(
    path: str | Path,
    records: Iterable[Mapping],
    *,
    frames: int,
    width: int,
    height: int,
) -> None:
    """tao-det/1 writer: header line plus canonically sorted records."""
    ordered = sorted(
        records, key=lambda r: (r["frame"], r["label"], r["score"], r["box"])
    )
    lines = [
        json_line(
            {"format": DETECTIONS_FORMAT, "frames": frames, "width": width, "height": height}
        )
    ]
    for rec in ordered:
        lines.append(
            json_line(
                {
                    "frame": rec["frame"],
                    "box": [float(v) for v in rec["box"]],
                    "label": rec["label"],
                    "score": float(rec["score"]),
                }
            )
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_pgm(path: str | Path, gray: np.ndarray) -> None:
    gray = np.asarray(gray)
    if gray.ndim != 2:
        raise ConversionError(f"graymap must be 2-D, got shape {gray.shape}")
    data = gray.astype(np.uint8)
    height, width = data.shape
    header = f"P5\n{width} {height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + data.tobytes())


def read_pgm(path: str | Path) -> np.ndarray:
    """8-bit graymap (binary P5 or ASCII P2) as a (height, width) array."""
    path = Path(path)
    blob = path.read_bytes()
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4 and pos < len(blob):
        ch = blob[pos : pos + 1]
        if ch.isspace():
            pos += 1
        elif ch == b"#":
            while pos < len(blob) and blob[pos : pos + 1] != b"\n":
                pos += 1
        else:
            start = pos
            while pos < len(blob) and not blob[pos : pos + 1].isspace():
                pos += 1
            tokens.append(blob[start:pos])
    if len(tokens) < 4 or tokens[0] not in (b"P5", b"P2"):
        raise ConversionError(f"{path}: not an 8-bit graymap (P2/P5)")
    try:
        width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    except ValueError:
        raise ConversionError(f"{path}: malformed graymap header") from None
    if width <= 0 or height <= 0 or not (0 < maxval <= 255):
        raise ConversionError(f"{path}: unsupported graymap geometry or depth")
    if tokens[0] == b"P5":
        data = blob[pos + 1 : pos + 1 + width * height]
        if len(data) != width * height:
            raise ConversionError(f"{path}: truncated graymap payload")
        arr = np.frombuffer(data, dtype=np.uint8).copy()
    else:
        try:
            values = [int(t) for t in blob[pos:].split()]
        except ValueError:
            raise ConversionError(f"{path}: malformed ASCII graymap payload") from None
        if len(values) != width * height:
            raise ConversionError(f"{path}: expected {width * height} samples, got {len(values)}")
        arr = np.asarray(values, dtype=np.uint8)
    return arr.reshape(height, width)
