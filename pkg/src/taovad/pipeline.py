"""Anomalous-box filtering: score threshold, temporal voting, prompt aggregation.

The robustness filter turns noisy per-frame detections into stable tracks by
voting over a sliding window of k frames. A box keeps an existing label when
enough recent frames contain a labeled box overlapping it; otherwise it earns
a fresh label only if enough upcoming frames corroborate it; otherwise it is
dropped. Confirmed tracks emit (frame, box, label) tuples at their creation
frame and at every save-interval frame, which downstream become segmentation
prompts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import ValidationError
from .geometry import center, iou
from .model import BBox, Detection, PipelineParams, Prompt, TrackedBox


@dataclass(frozen=True)
class FrameDetections:
    """All detections of one frame, in detector order."""

    frame_idx: int
    detections: tuple[Detection, ...]

    def __post_init__(self):
        if not isinstance(self.frame_idx, int) or self.frame_idx < 0:
            raise ValidationError(f"frame_idx must be a non-negative int, got {self.frame_idx!r}")
        detections = tuple(self.detections)
        for det in detections:
            if det.frame_idx != self.frame_idx:
                raise ValidationError(
                    f"detection at frame {det.frame_idx} grouped under frame {self.frame_idx}"
                )
        object.__setattr__(self, "detections", detections)


@dataclass(frozen=True)
class FrameTrace:
    """Fate of every anomalous box of one frame.

    inherited: (detection, label) pairs that continued an existing track,
        including boxes claimed in advance by a confirmation's forward
        matches.
    assigned: (detection, label) pairs confirmed as new tracks this frame.
    discarded: boxes with neither backward nor forward support.
    saved: tuples emitted at this frame (creation tuples plus save-interval
        emissions), deduplicated.
    """

    frame_idx: int
    inherited: tuple[tuple[Detection, int], ...]
    assigned: tuple[tuple[Detection, int], ...]
    discarded: tuple[Detection, ...]
    saved: tuple[TrackedBox, ...]


@dataclass(frozen=True)
class FilterTrace:
    """Per-frame audit trail of one robustness_filter run."""

    params: PipelineParams
    frames: tuple[FrameTrace, ...]

    def label_scores(self) -> dict[int, float]:
        """Highest anomaly score among the detections behind each label."""
        scores: dict[int, float] = {}
        for fr in self.frames:
            for det, label in (*fr.inherited, *fr.assigned):
                if label not in scores or det.anomaly_score > scores[label]:
                    scores[label] = det.anomaly_score
        return scores


def threshold_filter(frames: Sequence[FrameDetections], tau: float) -> list[FrameDetections]:
    """Keep detections with anomaly_score strictly greater than tau.

    Frame structure is preserved: a frame whose detections all fall at or
    below tau stays present with an empty detection tuple.
    """
    out = []
    for fr in frames:
        kept = tuple(d for d in fr.detections if d.anomaly_score > tau)
        out.append(FrameDetections(fr.frame_idx, kept))
    return out


def _check_clip(frames: Sequence[FrameDetections]):
    for i, fr in enumerate(frames):
        if fr.frame_idx != i:
            raise ValidationError(
                f"clip frames must be contiguous from 0; position {i} has frame_idx {fr.frame_idx}"
            )


def _best_inherited_label(
    box: BBox, history: list[list[tuple[BBox, int]]], h: float, m: int
) -> int | None:
    # Count, per label, the number of recent frames holding a matching
    # labeled box. Most supporting frames wins; ties go to the smaller label.
    support: dict[int, int] = {}
    for labeled in history:
        seen: set[int] = set()
        for other, label in labeled:
            if label not in seen and iou(box, other) > h:
                seen.add(label)
        for label in seen:
            support[label] = support.get(label, 0) + 1
    best: int | None = None
    best_count = 0
    for label, count in support.items():
        if count > best_count or (count == best_count and best is not None and label < best):
            best, best_count = label, count
    if best is not None and best_count >= m:
        return best
    return None


def _forward_support(
    box: BBox, frames: Sequence[FrameDetections], i: int, k: int, h: float
) -> list[tuple[int, int]]:
    """(frame, box index) of the best raw match in each of the next k frames."""
    matches: list[tuple[int, int]] = []
    for p in range(i + 1, min(i + k, len(frames) - 1) + 1):
        best_j = -1
        best_iou = h
        for j, det in enumerate(frames[p].detections):
            value = iou(box, det.bbox)
            if value > best_iou:
                best_iou, best_j = value, j
        if best_j >= 0:
            matches.append((p, best_j))
    return matches


def robustness_filter(
    frames: Sequence[FrameDetections], params: PipelineParams
) -> tuple[list[TrackedBox], FilterTrace]:
    """Temporal voting over anomalous boxes; returns saved tuples plus a trace.

    Inputs are the thresholded detections of one contiguous clip starting at
    frame 0. Per box, in order: keep a label claimed by an earlier
    confirmation's forward match; else inherit the best-supported label from
    the previous k frames (at least m matching frames at IoU > h); else
    confirm a fresh label when at least m of the next k frames hold a raw
    matching box, claiming the best match in each supporting frame for this
    track; else discard. Every confirmation emits a tuple at its creation
    frame, and every frame with frame_idx % l == 0 emits all its labeled
    boxes. A track unsupported for more than k frames simply falls out of the
    voting window; a later matching box starts a new label.
    """
    _check_clip(frames)
    k, h, m, l = params.k, params.h, params.m, params.l
    history: list[list[tuple[BBox, int]]] = []  # labeled boxes of the last k frames
    claims: dict[int, dict[int, int]] = {}  # frame -> box index -> pre-claimed label
    next_label = 0
    saved: list[TrackedBox] = []
    saved_keys: set[tuple[int, int, tuple[float, float, float, float]]] = set()
    traces: list[FrameTrace] = []

    def _save(tb: TrackedBox, bucket: list[TrackedBox]):
        key = (tb.frame_idx, tb.track_label, (tb.bbox.x1, tb.bbox.y1, tb.bbox.x2, tb.bbox.y2))
        if key not in saved_keys:
            saved_keys.add(key)
            saved.append(tb)
            bucket.append(tb)

    for i, fr in enumerate(frames):
        inherited: list[tuple[Detection, int]] = []
        assigned: list[tuple[Detection, int]] = []
        discarded: list[Detection] = []
        saved_here: list[TrackedBox] = []
        labeled_here: list[tuple[BBox, int]] = []
        frame_claims = claims.pop(i, {})
        for j, det in enumerate(fr.detections):
            if j in frame_claims:
                label = frame_claims[j]
                inherited.append((det, label))
                labeled_here.append((det.bbox, label))
                continue
            label = _best_inherited_label(det.bbox, history, h, m)
            if label is not None:
                inherited.append((det, label))
                labeled_here.append((det.bbox, label))
                continue
            support = _forward_support(det.bbox, frames, i, k, h)
            if len(support) >= m:
                label = next_label
                next_label += 1
                assigned.append((det, label))
                labeled_here.append((det.bbox, label))
                _save(TrackedBox(i, det.bbox, label), saved_here)
                for p, bj in support:
                    claims.setdefault(p, {}).setdefault(bj, label)
            else:
                discarded.append(det)
        if i % l == 0:
            for bbox, label in labeled_here:
                _save(TrackedBox(i, bbox, label), saved_here)
        history.append(labeled_here)
        if len(history) > k:
            history.pop(0)
        traces.append(
            FrameTrace(
                frame_idx=i,
                inherited=tuple(inherited),
                assigned=tuple(assigned),
                discarded=tuple(discarded),
                saved=tuple(saved_here),
            )
        )
    saved.sort(key=lambda t: (t.frame_idx, t.track_label, t.bbox.to_record()))
    return saved, FilterTrace(params=params, frames=tuple(traces))


def aggregate_prompts(tracked: Sequence[TrackedBox], l: int) -> list[Prompt]:
    """Turn saved tuples into center+box prompts.

    Keeps each label's earliest tuple (its creation emission) plus every
    tuple on a save-interval frame, so a tracked set can be re-aggregated at
    a coarser interval. Output is sorted by (frame, label) and deduplicated.
    """
    if not isinstance(l, int) or l < 1:
        raise ValidationError(f"l must be an int >= 1, got {l!r}")
    ordered = sorted(tracked, key=lambda t: (t.frame_idx, t.track_label, t.bbox.to_record()))
    first_frame: dict[int, int] = {}
    for t in ordered:
        first_frame.setdefault(t.track_label, t.frame_idx)
    prompts: list[Prompt] = []
    seen: set[tuple[int, int, tuple[float, ...]]] = set()
    for t in ordered:
        if t.frame_idx % l != 0 and t.frame_idx != first_frame[t.track_label]:
            continue
        key = (t.frame_idx, t.track_label, tuple(t.bbox.to_record()))
        if key in seen:
            continue
        seen.add(key)
        prompts.append(Prompt.for_tracked(t))
    return prompts


def raw_prompts(frames: Sequence[FrameDetections], l: int) -> list[Prompt]:
    """Prompts straight from thresholded boxes at every save-interval frame.

    This is the no-filtering pipeline variant: every box on an interval
    frame becomes its own single-prompt label, numbered in (frame, box)
    order.
    """
    if not isinstance(l, int) or l < 1:
        raise ValidationError(f"l must be an int >= 1, got {l!r}")
    _check_clip(frames)
    prompts: list[Prompt] = []
    label = 0
    for fr in frames:
        if fr.frame_idx % l != 0:
            continue
        for det in fr.detections:
            prompts.append(
                Prompt(
                    frame_idx=fr.frame_idx,
                    bbox=det.bbox,
                    center=center(det.bbox),
                    track_label=label,
                )
            )
            label += 1
    return prompts


def raw_prompt_scores(frames: Sequence[FrameDetections], l: int) -> dict[int, float]:
    """Label -> anomaly score map matching raw_prompts numbering."""
    scores: dict[int, float] = {}
    label = 0
    for fr in frames:
        if fr.frame_idx % l != 0:
            continue
        for det in fr.detections:
            scores[label] = det.anomaly_score
            label += 1
    return scores


def group_by_frame(
    detections: Iterable[Detection], frame_count: int
) -> list[FrameDetections]:
    """Arrange a flat detection list into contiguous per-frame groups."""
    if frame_count < 0:
        raise ValidationError("frame_count must be non-negative")
    buckets: list[list[Detection]] = [[] for _ in range(frame_count)]
    for det in detections:
        if det.frame_idx >= frame_count:
            raise ValidationError(
                f"detection at frame {det.frame_idx} out of range for a {frame_count}-frame clip"
            )
        buckets[det.frame_idx].append(det)
    return [FrameDetections(i, tuple(dets)) for i, dets in enumerate(buckets)]
