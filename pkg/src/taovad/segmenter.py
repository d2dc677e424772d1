"""Promptable-video-segmenter plumbing.

The engine never segments pixels itself; it builds prompts and hands them to
a backend. Three backends ship here:

* oracle: binds each prompt to the best-overlapping GT track and replays
  that track's masks on every frame (ideal propagation). Prompts that bind
  nothing emit their prompt box as a static rectangle, the redundant
  segmentation a real promptable segmenter would keep dragging along.
* drift: the oracle plus a failure model. Emission is causal (a label only
  emits from its first prompt frame on), bound tracks randomly drift and
  shrink, a fresh prompt on a live label re-anchors it, and when live labels
  exceed capacity the oldest bound tracks are forgotten while the rectangle
  junk stays, which is exactly how redundant prompts crowd out real targets.
* external: a subprocess speaking the line-delimited tao-seg/1 protocol.

All randomness in the drift backend comes from its seed; identical inputs
give bit-identical outputs.
"""

from __future__ import annotations

import json
import math
import subprocess
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import ProtocolError, ValidationError
from .geometry import iou
from .model import BBox, GroundTruth, MaskPlane, Prompt, ScoreMap
from .storage import RleMask, rle_decode

PROTOCOL_VERSION = "tao-seg/1"
DEFAULT_MATCH_IOU = 0.5
_SHRINK_PER_DRIFT = 0.95


@dataclass(frozen=True)
class SegmentationRequest:
    """One clip's worth of prompts plus the clip's geometry.

    frames_dir optionally points a real backend at the decoded frames; the
    built-in backends ignore it.
    """

    frame_count: int
    width: int
    height: int
    prompts: tuple[Prompt, ...]
    frames_dir: str | None = None

    def __post_init__(self):
        if not isinstance(self.frame_count, int) or self.frame_count < 1:
            raise ValidationError(f"frame_count must be an int >= 1, got {self.frame_count!r}")
        if (
            not isinstance(self.width, int)
            or not isinstance(self.height, int)
            or self.width < 1
            or self.height < 1
        ):
            raise ValidationError(f"clip dimensions must be positive ints, got {self.width!r}x{self.height!r}")
        prompts = tuple(self.prompts)
        for p in prompts:
            if p.frame_idx >= self.frame_count:
                raise ValidationError(
                    f"prompt at frame {p.frame_idx} out of range for a {self.frame_count}-frame clip"
                )
        object.__setattr__(self, "prompts", prompts)

    @property
    def labels(self) -> tuple[int, ...]:
        return tuple(sorted({p.track_label for p in self.prompts}))


@dataclass(frozen=True, eq=False)
class SegmentationResult:
    """Per-frame, per-label masks covering the whole clip."""

    width: int
    height: int
    masks: tuple[Mapping[int, MaskPlane], ...]
    score_maps: tuple[ScoreMap, ...] | None = None

    def __post_init__(self):
        masks = tuple(dict(m) for m in self.masks)
        for frame_idx, labels in enumerate(masks):
            for label, mask in labels.items():
                if (mask.width, mask.height) != (self.width, self.height):
                    raise ValidationError(
                        f"mask at frame {frame_idx} label {label} has mismatched dimensions"
                    )
        if self.score_maps is not None:
            score_maps = tuple(self.score_maps)
            if len(score_maps) != len(masks):
                raise ValidationError("score map count must match frame count")
            object.__setattr__(self, "score_maps", score_maps)
        object.__setattr__(self, "masks", masks)

    @property
    def frame_count(self) -> int:
        return len(self.masks)

    @property
    def labels(self) -> tuple[int, ...]:
        out: set[int] = set()
        for labels in self.masks:
            out.update(labels.keys())
        return tuple(sorted(out))

    def mask_at(self, frame_idx: int, label: int) -> MaskPlane:
        mask = self.masks[frame_idx].get(label)
        if mask is None:
            return MaskPlane.empty(self.width, self.height)
        return mask

    def union_mask(self, frame_idx: int) -> MaskPlane:
        bits = np.zeros((self.height, self.width), dtype=bool)
        for mask in self.masks[frame_idx].values():
            bits |= mask.bits
        return MaskPlane(self.width, self.height, bits)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SegmentationResult):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and self.masks == other.masks
            and self.score_maps == other.score_maps
        )

    def __ne__(self, other) -> bool:
        eq = self.__eq__(other)
        return NotImplemented if eq is NotImplemented else not eq


@dataclass(frozen=True)
class DriftParams:
    """Failure-model knobs for the drift backend.

    p_drift: per-frame probability that a live bound track slips.
    drift_step: translation distance (pixels) per slip; each slip also
        shrinks the emitted mask by 5%, compounding.
    capacity: how many labels the backend can track at once before it starts
        forgetting the oldest bound ones.
    seed: RNG seed; the backend is a pure function of (request, seed).
    """

    p_drift: float = 0.2
    drift_step: float = 2.0
    capacity: int = 3
    seed: int = 0

    def __post_init__(self):
        if not (isinstance(self.p_drift, (int, float)) and 0.0 <= float(self.p_drift) <= 1.0):
            raise ValidationError(f"p_drift must lie in [0, 1], got {self.p_drift!r}")
        if not (
            isinstance(self.drift_step, (int, float))
            and math.isfinite(float(self.drift_step))
            and float(self.drift_step) >= 0.0
        ):
            raise ValidationError(f"drift_step must be finite and >= 0, got {self.drift_step!r}")
        if not isinstance(self.capacity, int) or self.capacity < 1:
            raise ValidationError(f"capacity must be an int >= 1, got {self.capacity!r}")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ValidationError(f"seed must be a non-negative int, got {self.seed!r}")
        object.__setattr__(self, "p_drift", float(self.p_drift))
        object.__setattr__(self, "drift_step", float(self.drift_step))


def rect_mask(box: BBox, width: int, height: int) -> MaskPlane:
    """Pixels whose cells overlap the box with positive area, clipped to frame."""
    x1 = max(0, math.floor(box.x1))
    y1 = max(0, math.floor(box.y1))
    x2 = min(width, math.ceil(box.x2))
    y2 = min(height, math.ceil(box.y2))
    bits = np.zeros((height, width), dtype=bool)
    if x1 < x2 and y1 < y2:
        bits[y1:y2, x1:x2] = True
    return MaskPlane(width, height, bits)


def bind_prompt(prompt: Prompt, gt: GroundTruth, match_iou: float) -> int | None:
    """GT track whose region box at the prompt frame best overlaps the prompt.

    Returns None when no region reaches match_iou; ties pick the smaller id.
    """
    best: tuple[float, int] | None = None
    for region in gt.regions[prompt.frame_idx]:
        value = iou(prompt.bbox, region.bbox)
        if value < match_iou:
            continue
        if best is None or value > best[0] or (value == best[0] and region.gt_track_id < best[1]):
            best = (value, region.gt_track_id)
    return None if best is None else best[1]


class OracleBackend:
    """Ideal propagation against known GT; the metrics sanity anchor."""

    def __init__(self, gt: GroundTruth, match_iou: float = DEFAULT_MATCH_IOU):
        if not (0.0 < match_iou <= 1.0):
            raise ValidationError(f"match_iou must lie in (0, 1], got {match_iou!r}")
        self.gt = gt
        self.match_iou = match_iou

    def segment(self, request: SegmentationRequest) -> SegmentationResult:
        _check_request_against_gt(request, self.gt)
        bound: dict[int, set[int]] = {}
        rects: dict[int, list[BBox]] = {}
        for prompt in request.prompts:
            track = bind_prompt(prompt, self.gt, self.match_iou)
            if track is not None:
                bound.setdefault(prompt.track_label, set()).add(track)
            else:
                rects.setdefault(prompt.track_label, []).append(prompt.bbox)
        labels = request.labels
        per_frame: list[dict[int, MaskPlane]] = []
        for f in range(request.frame_count):
            frame_masks: dict[int, MaskPlane] = {}
            for label in labels:
                bits = np.zeros((request.height, request.width), dtype=bool)
                for track in sorted(bound.get(label, ())):
                    region = self.gt.region_of(f, track)
                    if region is not None:
                        bits |= region.mask.bits
                for box in rects.get(label, ()):
                    bits |= rect_mask(box, request.width, request.height).bits
                frame_masks[label] = MaskPlane(request.width, request.height, bits)
            per_frame.append(frame_masks)
        return SegmentationResult(request.width, request.height, tuple(per_frame))


class _LabelState:
    __slots__ = (
        "label",
        "activation",
        "prompt_frames",
        "bound_tracks",
        "rect_boxes",
        "offset",
        "scale",
        "evicted_at",
    )

    def __init__(self, label: int, activation: int):
        self.label = label
        self.activation = activation
        self.prompt_frames: set[int] = set()
        self.bound_tracks: list[int] = []
        self.rect_boxes: list[BBox] = []
        self.offset = (0.0, 0.0)
        self.scale = 1.0
        self.evicted_at: int | None = None

    @property
    def is_bound(self) -> bool:
        return bool(self.bound_tracks)


class DriftBackend:
    """Oracle propagation degraded by drift, shrinkage, and forgetting."""

    def __init__(
        self,
        gt: GroundTruth,
        params: DriftParams,
        match_iou: float = DEFAULT_MATCH_IOU,
    ):
        if not (0.0 < match_iou <= 1.0):
            raise ValidationError(f"match_iou must lie in (0, 1], got {match_iou!r}")
        self.gt = gt
        self.params = params
        self.match_iou = match_iou

    def segment(self, request: SegmentationRequest) -> SegmentationResult:
        _check_request_against_gt(request, self.gt)
        rng = np.random.default_rng(self.params.seed)
        states: dict[int, _LabelState] = {}
        for prompt in request.prompts:
            state = states.get(prompt.track_label)
            if state is None:
                state = _LabelState(prompt.track_label, prompt.frame_idx)
                states[prompt.track_label] = state
            state.activation = min(state.activation, prompt.frame_idx)
            state.prompt_frames.add(prompt.frame_idx)
            track = bind_prompt(prompt, self.gt, self.match_iou)
            if track is not None:
                if track not in state.bound_tracks:
                    state.bound_tracks.append(track)
            else:
                state.rect_boxes.append(prompt.bbox)
        for state in states.values():
            state.bound_tracks.sort()

        live: list[_LabelState] = []
        per_frame: list[dict[int, MaskPlane]] = []
        labels = request.labels
        for f in range(request.frame_count):
            # Activations, oldest label order for determinism.
            for state in sorted(states.values(), key=lambda s: s.label):
                if state.activation == f:
                    live.append(state)
            # A fresh prompt on a live label re-anchors its drift state.
            for state in live:
                if f in state.prompt_frames:
                    state.offset = (0.0, 0.0)
                    state.scale = 1.0
            # Forget the oldest bound tracks once over capacity; rectangle
            # labels are never forgotten, they are what causes the crowding.
            while len(live) > self.params.capacity:
                oldest: _LabelState | None = None
                for state in live:
                    if state.is_bound and (
                        oldest is None
                        or (state.activation, state.label) < (oldest.activation, oldest.label)
                    ):
                        oldest = state
                if oldest is None:
                    break
                oldest.evicted_at = f
                live.remove(oldest)
            # Emit.
            frame_masks: dict[int, MaskPlane] = {}
            live_set = {s.label for s in live}
            for label in labels:
                state = states[label]
                if label in live_set:
                    frame_masks[label] = self._emit(state, f, request)
                elif f in state.prompt_frames:
                    # A prompt always yields its own frame's mask, even when
                    # the label was (or is immediately) forgotten.
                    frame_masks[label] = self._emit_clean(state, f, request)
                else:
                    frame_masks[label] = MaskPlane.empty(request.width, request.height)
            per_frame.append(frame_masks)
            # Drift accumulates after emission, ordered by label.
            for state in sorted(live, key=lambda s: s.label):
                if state.is_bound and self.params.p_drift > 0.0:
                    if rng.random() < self.params.p_drift:
                        angle = rng.random() * 2.0 * math.pi
                        dx, dy = state.offset
                        state.offset = (
                            dx + self.params.drift_step * math.cos(angle),
                            dy + self.params.drift_step * math.sin(angle),
                        )
                        state.scale *= _SHRINK_PER_DRIFT
        return SegmentationResult(request.width, request.height, tuple(per_frame))

    def _emit(self, state: _LabelState, f: int, request: SegmentationRequest) -> MaskPlane:
        bits = np.zeros((request.height, request.width), dtype=bool)
        for track in state.bound_tracks:
            region = self.gt.region_of(f, track)
            if region is None:
                continue
            bits |= _transform_mask(region.mask, state.offset, state.scale)
        for box in state.rect_boxes:
            bits |= rect_mask(box, request.width, request.height).bits
        return MaskPlane(request.width, request.height, bits)

    def _emit_clean(self, state: _LabelState, f: int, request: SegmentationRequest) -> MaskPlane:
        bits = np.zeros((request.height, request.width), dtype=bool)
        for track in state.bound_tracks:
            region = self.gt.region_of(f, track)
            if region is not None:
                bits |= region.mask.bits
        for box in state.rect_boxes:
            bits |= rect_mask(box, request.width, request.height).bits
        return MaskPlane(request.width, request.height, bits)


def _transform_mask(mask: MaskPlane, offset: tuple[float, float], scale: float) -> np.ndarray:
    """Translate and shrink a mask about its centroid, nearest-neighbor sampled."""
    if offset == (0.0, 0.0) and scale == 1.0:
        return mask.bits
    ys, xs = np.nonzero(mask.bits)
    if ys.size == 0:
        return mask.bits
    cx = xs.mean() + 0.5
    cy = ys.mean() + 0.5
    gy, gx = np.mgrid[0 : mask.height, 0 : mask.width]
    # Inverse map target pixel centers into source coordinates so shrunken
    # masks stay solid.
    sx = cx + (gx + 0.5 - cx - offset[0]) / scale - 0.5
    sy = cy + (gy + 0.5 - cy - offset[1]) / scale - 0.5
    sxi = np.rint(sx).astype(np.int64)
    syi = np.rint(sy).astype(np.int64)
    valid = (sxi >= 0) & (sxi < mask.width) & (syi >= 0) & (syi < mask.height)
    out = np.zeros_like(mask.bits)
    out[valid] = mask.bits[syi[valid], sxi[valid]]
    return out


class ExternalBackend:
    """Subprocess backend speaking line-delimited JSON, version tao-seg/1.

    Session per request: spawn, INIT/ACK handshake, one SEGMENT message,
    RESULT lines until END, then shutdown. Any malformed or unexpected
    message aborts the session with a ProtocolError.
    """

    def __init__(self, command: Sequence[str]):
        command = list(command)
        if not command:
            raise ValidationError("external backend needs a non-empty command")
        self.command = command

    def segment(self, request: SegmentationRequest) -> SegmentationResult:
        try:
            proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise ProtocolError(f"could not start backend {self.command!r}: {exc}") from None
        try:
            return self._run_session(proc, request)
        finally:
            _shutdown(proc)

    def _run_session(
        self, proc: subprocess.Popen, request: SegmentationRequest
    ) -> SegmentationResult:
        assert proc.stdin is not None and proc.stdout is not None
        init = {
            "type": "INIT",
            "version": PROTOCOL_VERSION,
            "width": request.width,
            "height": request.height,
            "frame_count": request.frame_count,
            "frames_dir": request.frames_dir,
        }
        _send(proc, init)
        ack = _recv(proc)
        if set(ack.keys()) != {"type", "version"} or ack["type"] != "ACK":
            raise ProtocolError(f"expected ACK, got {ack!r}")
        if ack["version"] != PROTOCOL_VERSION:
            raise ProtocolError(
                f"backend speaks {ack['version']!r}, expected {PROTOCOL_VERSION!r}"
            )
        _send(
            proc,
            {"type": "SEGMENT", "prompts": [p.to_record() for p in request.prompts]},
        )
        per_frame: list[dict[int, MaskPlane]] = [{} for _ in range(request.frame_count)]
        while True:
            msg = _recv(proc)
            kind = msg.get("type")
            if kind == "END":
                if set(msg.keys()) != {"type"}:
                    raise ProtocolError(f"malformed END message: {msg!r}")
                break
            if kind == "ERROR":
                raise ProtocolError(f"backend error: {msg.get('message')!r}")
            if kind != "RESULT" or set(msg.keys()) != {"type", "frame", "label", "rle"}:
                raise ProtocolError(f"unexpected message: {msg!r}")
            frame, label, runs = msg["frame"], msg["label"], msg["rle"]
            if (
                isinstance(frame, bool)
                or not isinstance(frame, int)
                or not (0 <= frame < request.frame_count)
            ):
                raise ProtocolError(f"RESULT frame out of range: {frame!r}")
            if isinstance(label, bool) or not isinstance(label, int) or label < 0:
                raise ProtocolError(f"RESULT label invalid: {label!r}")
            if label in per_frame[frame]:
                raise ProtocolError(f"duplicate RESULT for frame {frame} label {label}")
            if not isinstance(runs, list):
                raise ProtocolError(f"RESULT rle must be a list, got {runs!r}")
            try:
                mask = rle_decode(RleMask(request.width, request.height, tuple(runs)))
            except ValidationError as exc:
                raise ProtocolError(f"bad RESULT rle: {exc}") from None
            per_frame[frame][label] = mask
        return SegmentationResult(request.width, request.height, tuple(per_frame))


def _send(proc: subprocess.Popen, msg: dict):
    assert proc.stdin is not None
    try:
        proc.stdin.write(json.dumps(msg, separators=(",", ":"), allow_nan=False) + "\n")
        proc.stdin.flush()
    except (BrokenPipeError, OSError):
        raise ProtocolError("backend closed its input mid-session") from None


def _recv(proc: subprocess.Popen) -> dict:
    assert proc.stdout is not None
    line = proc.stdout.readline()
    if line == "":
        raise ProtocolError("backend closed its output before the session finished")
    try:
        msg = json.loads(line)
    except json.JSONDecodeError:
        raise ProtocolError(f"malformed backend message: {line!r}") from None
    if not isinstance(msg, dict) or "type" not in msg:
        raise ProtocolError(f"malformed backend message: {line!r}")
    return msg


def _shutdown(proc: subprocess.Popen):
    try:
        if proc.stdin is not None:
            proc.stdin.close()
    except OSError:
        pass
    try:
        proc.wait(timeout=5)
    except subprocess.TimeoutExpired:
        proc.kill()
        proc.wait()


def _check_request_against_gt(request: SegmentationRequest, gt: GroundTruth):
    if (request.width, request.height) != (gt.width, gt.height):
        raise ValidationError(
            f"request is {request.width}x{request.height} but GT is {gt.width}x{gt.height}"
        )
    if request.frame_count != gt.frame_count:
        raise ValidationError(
            f"request has {request.frame_count} frames but GT has {gt.frame_count}"
        )


def segment(request: SegmentationRequest, backend) -> SegmentationResult:
    """Run a backend and enforce the output contract."""
    result = backend.segment(request)
    if result.frame_count != request.frame_count:
        raise ProtocolError(
            f"backend returned {result.frame_count} frames, expected {request.frame_count}"
        )
    if (result.width, result.height) != (request.width, request.height):
        raise ProtocolError(
            f"backend returned {result.width}x{result.height} masks, expected "
            f"{request.width}x{request.height}"
        )
    allowed = set(request.labels)
    extra = set(result.labels) - allowed
    if extra:
        raise ProtocolError(f"backend emitted labels outside the prompt set: {sorted(extra)}")
    return result


def segment_frame_isolated(
    request: SegmentationRequest, gt: GroundTruth, match_iou: float = DEFAULT_MATCH_IOU
) -> SegmentationResult:
    """Per-frame segmentation: each prompt yields a mask only on its own frame.

    This is the no-tracking pipeline variant; there is no propagation, so no
    temporal state and nothing to drift or forget.
    """
    _check_request_against_gt(request, gt)
    labels = request.labels
    per_frame: list[dict[int, MaskPlane]] = [
        {label: MaskPlane.empty(request.width, request.height) for label in labels}
        for _ in range(request.frame_count)
    ]
    for prompt in request.prompts:
        track = bind_prompt(prompt, gt, match_iou)
        if track is not None:
            region = gt.region_of(prompt.frame_idx, track)
            assert region is not None
            addition = region.mask
        else:
            addition = rect_mask(prompt.bbox, request.width, request.height)
        current = per_frame[prompt.frame_idx][prompt.track_label]
        per_frame[prompt.frame_idx][prompt.track_label] = current.union(addition)
    return SegmentationResult(request.width, request.height, tuple(per_frame))
