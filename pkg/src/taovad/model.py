"""Core domain types.

Everything downstream (filtering, segmentation plumbing, metrics, storage)
speaks these types. All of them are immutable after construction and
validate their invariants eagerly, so a value that exists is a value that
is safe to share between threads and to serialize.

Coordinate conventions: frame origin is the top-left corner, x grows right,
y grows down. Pixel (x, y) occupies the half-open unit square
[x, x+1) x [y, y+1), so a mask's tight box uses x_max+1 / y_max+1 on the
far edges. Box coordinates are real-valued and may be sub-pixel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

from .errors import ValidationError


def _finite(*values: float) -> bool:
    return all(math.isfinite(v) for v in values)


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box with strictly positive extent.

    Attributes:
        x1, y1: top-left corner (inclusive edge).
        x2, y2: bottom-right corner (exclusive edge); x1 < x2, y1 < y2.
    """

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        coords = (self.x1, self.y1, self.x2, self.y2)
        if not _finite(*coords):
            raise ValidationError(f"box coordinates must be finite, got {coords!r}")
        if min(coords) < 0:
            raise ValidationError(f"box coordinates must be non-negative, got {coords!r}")
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise ValidationError(f"box must have positive extent, got {coords!r}")
        # Normalize to plain floats so equality and serialization are stable
        # regardless of the numeric type the caller handed in.
        object.__setattr__(self, "x1", float(self.x1))
        object.__setattr__(self, "y1", float(self.y1))
        object.__setattr__(self, "x2", float(self.x2))
        object.__setattr__(self, "y2", float(self.y2))

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return self.width * self.height

    def to_record(self) -> list[float]:
        return [self.x1, self.y1, self.x2, self.y2]

    @classmethod
    def from_record(cls, rec: Sequence[float]) -> "BBox":
        if not isinstance(rec, (list, tuple)) or len(rec) != 4:
            raise ValidationError(f"box record must be a 4-element list, got {rec!r}")
        for v in rec:
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ValidationError(f"box coordinates must be numbers, got {v!r}")
        return cls(*(float(v) for v in rec))


@dataclass(frozen=True)
class Detection:
    """One detector output on one frame: a box, its class, and its anomaly score."""

    frame_idx: int
    bbox: BBox
    class_label: str
    anomaly_score: float

    def __post_init__(self):
        if not isinstance(self.frame_idx, int) or self.frame_idx < 0:
            raise ValidationError(f"frame_idx must be a non-negative int, got {self.frame_idx!r}")
        if not isinstance(self.class_label, str):
            raise ValidationError("class_label must be a string (opaque to the engine)")
        if not _finite(self.anomaly_score):
            raise ValidationError(f"anomaly_score must be finite, got {self.anomaly_score!r}")
        object.__setattr__(self, "anomaly_score", float(self.anomaly_score))

    def to_record(self) -> dict:
        return {
            "frame": self.frame_idx,
            "box": self.bbox.to_record(),
            "label": self.class_label,
            "score": self.anomaly_score,
        }

    @classmethod
    def from_record(cls, rec: Mapping) -> "Detection":
        _require_keys(rec, {"frame", "box", "label", "score"}, "detection")
        return cls(
            frame_idx=_as_int(rec["frame"], "frame"),
            bbox=BBox.from_record(rec["box"]),
            class_label=_as_str(rec["label"], "label"),
            anomaly_score=_as_float(rec["score"], "score"),
        )


@dataclass(frozen=True)
class TrackedBox:
    """A box that survived robustness filtering, tagged with its track label."""

    frame_idx: int
    bbox: BBox
    track_label: int

    def __post_init__(self):
        if not isinstance(self.frame_idx, int) or self.frame_idx < 0:
            raise ValidationError(f"frame_idx must be a non-negative int, got {self.frame_idx!r}")
        if not isinstance(self.track_label, int) or self.track_label < 0:
            raise ValidationError(f"track_label must be a non-negative int, got {self.track_label!r}")

    def to_record(self) -> dict:
        return {"frame": self.frame_idx, "label": self.track_label, "box": self.bbox.to_record()}

    @classmethod
    def from_record(cls, rec: Mapping) -> "TrackedBox":
        _require_keys(rec, {"frame", "label", "box"}, "tracked box")
        return cls(
            frame_idx=_as_int(rec["frame"], "frame"),
            bbox=BBox.from_record(rec["box"]),
            track_label=_as_int(rec["label"], "label"),
        )


@dataclass(frozen=True)
class Prompt:
    """Segmentation prompt: a labeled box plus its center point on one frame.

    The center must lie strictly inside the box; the pair (box, center) is
    what a promptable segmenter consumes.
    """

    frame_idx: int
    bbox: BBox
    center: tuple[float, float]
    track_label: int

    def __post_init__(self):
        if not isinstance(self.frame_idx, int) or self.frame_idx < 0:
            raise ValidationError(f"frame_idx must be a non-negative int, got {self.frame_idx!r}")
        if not isinstance(self.track_label, int) or self.track_label < 0:
            raise ValidationError(f"track_label must be a non-negative int, got {self.track_label!r}")
        cx, cy = self.center
        if not _finite(cx, cy):
            raise ValidationError(f"center must be finite, got {self.center!r}")
        if not (self.bbox.x1 < cx < self.bbox.x2 and self.bbox.y1 < cy < self.bbox.y2):
            raise ValidationError(
                f"center {self.center!r} must lie strictly inside box {self.bbox.to_record()!r}"
            )
        object.__setattr__(self, "center", (float(cx), float(cy)))

    @classmethod
    def for_tracked(cls, tracked: TrackedBox) -> "Prompt":
        b = tracked.bbox
        return cls(
            frame_idx=tracked.frame_idx,
            bbox=b,
            center=((b.x1 + b.x2) / 2.0, (b.y1 + b.y2) / 2.0),
            track_label=tracked.track_label,
        )

    def to_record(self) -> dict:
        return {
            "frame": self.frame_idx,
            "label": self.track_label,
            "box": self.bbox.to_record(),
            "center": [self.center[0], self.center[1]],
        }

    @classmethod
    def from_record(cls, rec: Mapping) -> "Prompt":
        _require_keys(rec, {"frame", "label", "box", "center"}, "prompt")
        center = rec["center"]
        if not isinstance(center, (list, tuple)) or len(center) != 2:
            raise ValidationError(f"center record must be a 2-element list, got {center!r}")
        return cls(
            frame_idx=_as_int(rec["frame"], "frame"),
            bbox=BBox.from_record(rec["box"]),
            center=(float(center[0]), float(center[1])),
            track_label=_as_int(rec["label"], "label"),
        )


@dataclass(frozen=True, eq=False)
class MaskPlane:
    """Immutable single-frame binary mask, row-major, shape (height, width)."""

    width: int
    height: int
    bits: np.ndarray

    def __post_init__(self):
        if not isinstance(self.width, int) or not isinstance(self.height, int):
            raise ValidationError("mask dimensions must be ints")
        if self.width <= 0 or self.height <= 0:
            raise ValidationError(f"mask dimensions must be positive, got {self.width}x{self.height}")
        bits = np.asarray(self.bits, dtype=bool)
        if bits.shape != (self.height, self.width):
            raise ValidationError(
                f"mask bits shape {bits.shape} does not match {self.height}x{self.width}"
            )
        bits = np.ascontiguousarray(bits)
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @classmethod
    def empty(cls, width: int, height: int) -> "MaskPlane":
        return cls(width, height, np.zeros((height, width), dtype=bool))

    @classmethod
    def full(cls, width: int, height: int) -> "MaskPlane":
        return cls(width, height, np.ones((height, width), dtype=bool))

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "MaskPlane":
        arr = np.asarray(arr)
        if arr.ndim != 2:
            raise ValidationError(f"mask array must be 2-D, got shape {arr.shape}")
        return cls(int(arr.shape[1]), int(arr.shape[0]), arr.astype(bool))

    @property
    def count(self) -> int:
        return int(self.bits.sum())

    @property
    def is_empty(self) -> bool:
        return not self.bits.any()

    def union(self, other: "MaskPlane") -> "MaskPlane":
        self._check_dims(other)
        return MaskPlane(self.width, self.height, self.bits | other.bits)

    def intersect(self, other: "MaskPlane") -> "MaskPlane":
        self._check_dims(other)
        return MaskPlane(self.width, self.height, self.bits & other.bits)

    def covers(self, other: "MaskPlane") -> bool:
        """True when every set pixel of `other` is set in self."""
        self._check_dims(other)
        return not bool((other.bits & ~self.bits).any())

    def _check_dims(self, other: "MaskPlane"):
        if (self.width, self.height) != (other.width, other.height):
            raise ValidationError(
                f"mask dimensions differ: {self.width}x{self.height} vs {other.width}x{other.height}"
            )

    def __eq__(self, other) -> bool:
        if not isinstance(other, MaskPlane):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and bool(np.array_equal(self.bits, other.bits))
        )

    def __ne__(self, other) -> bool:
        eq = self.__eq__(other)
        return NotImplemented if eq is NotImplemented else not eq


@dataclass(frozen=True, eq=False)
class ScoreMap:
    """Immutable per-pixel real-valued scores for one frame, shape (height, width)."""

    width: int
    height: int
    values: np.ndarray

    def __post_init__(self):
        if not isinstance(self.width, int) or not isinstance(self.height, int):
            raise ValidationError("score map dimensions must be ints")
        if self.width <= 0 or self.height <= 0:
            raise ValidationError(
                f"score map dimensions must be positive, got {self.width}x{self.height}"
            )
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != (self.height, self.width):
            raise ValidationError(
                f"score map shape {values.shape} does not match {self.height}x{self.width}"
            )
        if not np.isfinite(values).all():
            raise ValidationError("score map values must all be finite")
        values = np.ascontiguousarray(values)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_mask(cls, mask: MaskPlane) -> "ScoreMap":
        return cls(mask.width, mask.height, mask.bits.astype(np.float64))

    def to_record(self) -> dict:
        return {
            "width": self.width,
            "height": self.height,
            "values": [[float(v) for v in row] for row in self.values],
        }

    @classmethod
    def from_record(cls, rec: Mapping) -> "ScoreMap":
        _require_keys(rec, {"width", "height", "values"}, "score map")
        return cls(
            _as_int(rec["width"], "width"),
            _as_int(rec["height"], "height"),
            np.asarray(rec["values"], dtype=np.float64),
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, ScoreMap):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and bool(np.array_equal(self.values, other.values))
        )

    def __ne__(self, other) -> bool:
        eq = self.__eq__(other)
        return NotImplemented if eq is NotImplemented else not eq


@dataclass(frozen=True)
class GTRegion:
    """One annotated anomalous region on one frame.

    The mask is full-frame-sized with only this region's pixels set; the box
    is its tight pixel-cell bound. Region identity across frames is the
    gt_track_id.
    """

    gt_track_id: int
    mask: MaskPlane
    bbox: BBox
    area: int

    def __post_init__(self):
        if not isinstance(self.gt_track_id, int) or self.gt_track_id < 0:
            raise ValidationError(f"gt_track_id must be a non-negative int, got {self.gt_track_id!r}")
        if self.mask.is_empty:
            raise ValidationError("a GT region must contain at least one pixel")
        if self.area != self.mask.count:
            raise ValidationError(
                f"region area {self.area} does not match its mask pixel count {self.mask.count}"
            )


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Pixel-level annotation for one clip.

    frames[i] is the binary anomaly mask of frame i; regions[i] lists the
    annotated regions of frame i, each carrying a gt_track_id. Region pixels
    are always a subset of the frame mask, and track ids never repeat within
    a frame.
    """

    frames: tuple[MaskPlane, ...]
    regions: tuple[tuple[GTRegion, ...], ...]

    def __post_init__(self):
        frames = tuple(self.frames)
        regions = tuple(tuple(r) for r in self.regions)
        if len(frames) == 0:
            raise ValidationError("ground truth needs at least one frame")
        if len(frames) != len(regions):
            raise ValidationError(
                f"frame count {len(frames)} does not match region list count {len(regions)}"
            )
        w, h = frames[0].width, frames[0].height
        for i, mask in enumerate(frames):
            if (mask.width, mask.height) != (w, h):
                raise ValidationError(f"frame {i} has dimensions {mask.width}x{mask.height}, expected {w}x{h}")
            seen: set[int] = set()
            for region in regions[i]:
                if (region.mask.width, region.mask.height) != (w, h):
                    raise ValidationError(f"frame {i}: region mask dimensions differ from the clip")
                if region.gt_track_id in seen:
                    raise ValidationError(f"frame {i}: duplicate gt_track_id {region.gt_track_id}")
                seen.add(region.gt_track_id)
                if not mask.covers(region.mask):
                    raise ValidationError(
                        f"frame {i}: region {region.gt_track_id} has pixels outside the frame mask"
                    )
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "regions", regions)

    @property
    def frame_count(self) -> int:
        return len(self.frames)

    @property
    def width(self) -> int:
        return self.frames[0].width

    @property
    def height(self) -> int:
        return self.frames[0].height

    @cached_property
    def track_ids(self) -> tuple[int, ...]:
        ids = {r.gt_track_id for per_frame in self.regions for r in per_frame}
        return tuple(sorted(ids))

    @cached_property
    def _region_index(self) -> dict[tuple[int, int], GTRegion]:
        index: dict[tuple[int, int], GTRegion] = {}
        for i, per_frame in enumerate(self.regions):
            for region in per_frame:
                index[(i, region.gt_track_id)] = region
        return index

    def region_of(self, frame_idx: int, gt_track_id: int) -> GTRegion | None:
        return self._region_index.get((frame_idx, gt_track_id))

    def track_frames(self, gt_track_id: int) -> tuple[int, ...]:
        return tuple(
            i for i in range(self.frame_count) if (i, gt_track_id) in self._region_index
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, GroundTruth):
            return NotImplemented
        return self.frames == other.frames and self.regions == other.regions

    def __ne__(self, other) -> bool:
        eq = self.__eq__(other)
        return NotImplemented if eq is NotImplemented else not eq


@dataclass(frozen=True)
class PipelineParams:
    """Knobs of the box filtering pipeline.

    tau: anomaly score cut; a detection survives only with score > tau.
    k:   temporal voting window length, k >= 1.
    h:   box overlap threshold for a temporal match, 0 < h < 1.
    m:   matching frames required inside a window, 1 <= m <= k.
    l:   save interval; every frame with frame_idx % l == 0 emits its live
         labeled boxes, l >= 1.
    """

    tau: float = 1.5
    k: int = 5
    h: float = 0.2
    m: int = 3
    l: int = 5

    def __post_init__(self):
        if not _finite(self.tau):
            raise ValidationError(f"tau must be finite, got {self.tau!r}")
        if not isinstance(self.k, int) or self.k < 1:
            raise ValidationError(f"k must be an int >= 1, got {self.k!r}")
        if not isinstance(self.m, int) or not (1 <= self.m <= self.k):
            raise ValidationError(f"m must be an int with 1 <= m <= k={self.k}, got {self.m!r}")
        if not (0.0 < self.h < 1.0):
            raise ValidationError(f"h must lie in (0, 1), got {self.h!r}")
        if not isinstance(self.l, int) or self.l < 1:
            raise ValidationError(f"l must be an int >= 1, got {self.l!r}")
        object.__setattr__(self, "tau", float(self.tau))
        object.__setattr__(self, "h", float(self.h))

    @classmethod
    def ped2(cls) -> "PipelineParams":
        """Profile tuned for the UCSD Ped2 setting."""
        return cls(tau=1.5, k=5, h=0.2, m=3, l=5)

    @classmethod
    def shtech(cls) -> "PipelineParams":
        """Profile tuned for the ShanghaiTech setting."""
        return cls(tau=1.6, k=5, h=0.2, m=3, l=15)

    def to_record(self) -> dict:
        return {"tau": self.tau, "k": self.k, "h": self.h, "m": self.m, "l": self.l}

    @classmethod
    def from_record(cls, rec: Mapping) -> "PipelineParams":
        _require_keys(rec, {"tau", "k", "h", "m", "l"}, "pipeline params")
        return cls(
            tau=_as_float(rec["tau"], "tau"),
            k=_as_int(rec["k"], "k"),
            h=_as_float(rec["h"], "h"),
            m=_as_int(rec["m"], "m"),
            l=_as_int(rec["l"], "l"),
        )


PROFILES: dict[str, PipelineParams] = {
    "ped2": PipelineParams.ped2(),
    "shtech": PipelineParams.shtech(),
}


def _require_keys(rec: Mapping, expected: set[str], what: str):
    if not isinstance(rec, Mapping):
        raise ValidationError(f"{what} record must be an object, got {type(rec).__name__}")
    keys = set(rec.keys())
    missing = expected - keys
    unknown = keys - expected
    if missing:
        raise ValidationError(f"{what} record is missing key(s): {', '.join(sorted(missing))}")
    if unknown:
        raise ValidationError(f"{what} record has unknown key(s): {', '.join(sorted(unknown))}")


def _as_int(value, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValidationError(f"{name} must be an integer, got {value!r}")
    return value


def _as_float(value, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(f"{name} must be a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ValidationError(f"{name} must be finite, got {value!r}")
    return value


def _as_str(value, name: str) -> str:
    if not isinstance(value, str):
        raise ValidationError(f"{name} must be a string, got {value!r}")
    return value
