"""Dual-level evaluation: pooled pixel metrics and region/track metrics.

Pixel metrics pool every pixel of every frame into one population. Object
metrics work on detected regions (boxes derived from segmentation output)
against GT regions and GT tracks:

* a GT region counts as detected when a detected region overlaps it at
  IoU >= alpha, and one detected region may validate at most one GT region
  per frame (greedy best-IoU, ties to the smaller GT id);
* a GT track counts as detected when at least a `coverage` fraction of its
  regions is detected.

Curve mode sweeps detections by descending score and integrates the
detected fraction against false-positive regions per frame over [0, 1];
point mode evaluates all detections as one operating point, which is the
natural reading for a binary mask pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import stats

from .errors import UndefinedMetricError, ValidationError
from .geometry import connected_components, iou, merge_overlapping
from .model import BBox, GroundTruth, GTRegion, MaskPlane, ScoreMap

DEFAULT_ALPHA = 0.1
DEFAULT_COVERAGE = 0.1
DEFAULT_FPR_LIMIT = 0.3
METRIC_NAMES = ("pixel_auroc", "pixel_ap", "pixel_aupro", "pixel_f1", "rbdc", "tbdc")

# numpy renamed trapz in 2.0
_trapezoid = getattr(np, "trapezoid", None) or np.trapz


@dataclass(frozen=True)
class PixelEvalInput:
    """Per-frame score maps paired with per-frame GT masks."""

    scores: tuple[ScoreMap, ...]
    gt: tuple[MaskPlane, ...]

    def __post_init__(self):
        scores = tuple(self.scores)
        gt = tuple(self.gt)
        if not scores or len(scores) != len(gt):
            raise ValidationError(
                f"need matching non-empty frame lists, got {len(scores)} scores vs {len(gt)} masks"
            )
        for i, (s, g) in enumerate(zip(scores, gt)):
            if (s.width, s.height) != (g.width, g.height):
                raise ValidationError(f"frame {i}: score map and GT mask dimensions differ")
            if (s.width, s.height) != (scores[0].width, scores[0].height):
                raise ValidationError(f"frame {i}: dimensions differ from frame 0")
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "gt", gt)

    @classmethod
    def from_masks(
        cls, pred: Sequence[MaskPlane], gt: Sequence[MaskPlane]
    ) -> "PixelEvalInput":
        return cls(tuple(ScoreMap.from_mask(m) for m in pred), tuple(gt))

    def pooled(self) -> tuple[np.ndarray, np.ndarray]:
        scores = np.concatenate([s.values.ravel() for s in self.scores])
        labels = np.concatenate([g.bits.ravel() for g in self.gt])
        return scores, labels


@dataclass(frozen=True)
class DetectedRegion:
    """A detected region box plus the score used to rank it in curve mode."""

    bbox: BBox
    score: float = 1.0

    def __post_init__(self):
        if not isinstance(self.score, (int, float)) or not np.isfinite(self.score):
            raise ValidationError(f"region score must be finite, got {self.score!r}")
        object.__setattr__(self, "score", float(self.score))


@dataclass(frozen=True)
class ObjectEvalInput:
    """Per-frame detected regions against per-frame GT regions."""

    detections: tuple[tuple[DetectedRegion, ...], ...]
    gt_regions: tuple[tuple[GTRegion, ...], ...]
    alpha: float = DEFAULT_ALPHA

    def __post_init__(self):
        detections = tuple(tuple(d) for d in self.detections)
        gt_regions = tuple(tuple(r) for r in self.gt_regions)
        if not detections or len(detections) != len(gt_regions):
            raise ValidationError(
                "need matching non-empty per-frame lists of detections and GT regions"
            )
        if not (0.0 < self.alpha < 1.0):
            raise ValidationError(f"alpha must lie in (0, 1), got {self.alpha!r}")
        object.__setattr__(self, "detections", detections)
        object.__setattr__(self, "gt_regions", gt_regions)

    @property
    def frame_count(self) -> int:
        return len(self.detections)


@dataclass(frozen=True)
class MetricsReport:
    """All six metric values; None marks a metric undefined on this input."""

    pixel_auroc: float | None = None
    pixel_ap: float | None = None
    pixel_aupro: float | None = None
    pixel_f1: float | None = None
    rbdc: float | None = None
    tbdc: float | None = None
    metadata: dict = field(default_factory=dict)

    def values(self) -> dict[str, float | None]:
        return {name: getattr(self, name) for name in METRIC_NAMES}

    def to_text(self) -> str:
        lines = []
        for name, value in self.values().items():
            if value is None:
                lines.append(f"{name}=undefined")
            else:
                lines.append(f"{name}={value * 100.0:.2f}")
        return "\n".join(lines) + "\n"

    def to_record(self) -> dict:
        rec: dict = {name: value for name, value in self.values().items()}
        rec["metadata"] = self.metadata
        return rec


def binarize(scores: ScoreMap, threshold: float = 0.5) -> MaskPlane:
    """Pixel set iff its score strictly exceeds the threshold."""
    if not np.isfinite(threshold):
        raise ValidationError(f"threshold must be finite, got {threshold!r}")
    return MaskPlane(scores.width, scores.height, scores.values > threshold)


def _pooled_or_raise(inp: PixelEvalInput) -> tuple[np.ndarray, np.ndarray, int, int]:
    scores, labels = inp.pooled()
    pos = int(labels.sum())
    neg = labels.size - pos
    return scores, labels, pos, neg


def pixel_auroc(inp: PixelEvalInput) -> float:
    """Rank-based AUROC over all pooled pixels; ties count one half."""
    scores, labels, pos, neg = _pooled_or_raise(inp)
    if pos == 0 or neg == 0:
        raise UndefinedMetricError("pixel_auroc needs both anomalous and normal pixels")
    ranks = stats.rankdata(scores)
    pos_rank_sum = float(ranks[labels].sum())
    return (pos_rank_sum - pos * (pos + 1) / 2.0) / (float(pos) * float(neg))


def pixel_ap(inp: PixelEvalInput) -> float:
    """Average precision with step-wise precision-recall interpolation."""
    scores, labels, pos, _ = _pooled_or_raise(inp)
    if pos == 0:
        raise UndefinedMetricError("pixel_ap needs at least one anomalous pixel")
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_labels = labels[order]
    tp_cum = np.cumsum(sorted_labels)
    # Last index of each distinct-score group: earlier indices share the
    # group's threshold and must not form their own PR point.
    boundary = np.flatnonzero(np.diff(sorted_scores))
    idx = np.concatenate((boundary, [sorted_scores.size - 1]))
    tp = tp_cum[idx].astype(np.float64)
    total = (idx + 1).astype(np.float64)
    precision = tp / total
    recall = tp / float(pos)
    prev_recall = np.concatenate(([0.0], recall[:-1]))
    return float(((recall - prev_recall) * precision).sum())


def aupro_samples(inp: PixelEvalInput) -> list[tuple[float, float, float]]:
    """(threshold, pixel FPR, mean per-component recall) for det = {score > t},
    one sample per distinct score, thresholds descending."""
    scores, labels, pos, neg = _pooled_or_raise(inp)
    if pos == 0:
        raise UndefinedMetricError("pixel_aupro needs at least one GT region")
    if neg == 0:
        raise UndefinedMetricError("pixel_aupro needs at least one normal pixel")
    component_scores: list[np.ndarray] = []
    for score_map, gt_mask in zip(inp.scores, inp.gt):
        for region in connected_components(gt_mask):
            component_scores.append(np.sort(score_map.values[region.mask.bits]))
    neg_scores = np.sort(scores[~labels])
    thresholds = np.unique(scores)[::-1]
    n_neg = float(neg_scores.size)
    samples = []
    for t in thresholds:
        fp = neg_scores.size - int(np.searchsorted(neg_scores, t, side="right"))
        covered = 0.0
        for comp in component_scores:
            hit = comp.size - int(np.searchsorted(comp, t, side="right"))
            covered += hit / comp.size
        samples.append((float(t), fp / n_neg, covered / len(component_scores)))
    return samples


def pixel_aupro(inp: PixelEvalInput, fpr_limit: float = DEFAULT_FPR_LIMIT) -> float:
    """Area under per-region overlap vs pixel FPR, up to fpr_limit, normalized.

    Sweeps det = {score > t} over every distinct score, averages each GT
    connected component's recall, and extends the last achieved point
    horizontally when the curve stops short of fpr_limit.
    """
    if not (0.0 < fpr_limit <= 1.0):
        raise ValidationError(f"fpr_limit must lie in (0, 1], got {fpr_limit!r}")
    samples = aupro_samples(inp)
    return _area_to_limit([s[1] for s in samples], [s[2] for s in samples], fpr_limit)


def _area_to_limit(fprs: Sequence[float], values: Sequence[float], limit: float) -> float:
    xs = [0.0]
    ys = [0.0]
    if fprs and fprs[0] == 0.0:
        xs, ys = [], []
    for x, y in zip(fprs, values):
        if x > limit:
            x_prev = xs[-1] if xs else 0.0
            y_prev = ys[-1] if ys else 0.0
            if x > x_prev:
                frac = (limit - x_prev) / (x - x_prev)
                xs.append(limit)
                ys.append(y_prev + frac * (y - y_prev))
            break
        xs.append(float(x))
        ys.append(float(y))
    if xs[-1] < limit:
        xs.append(limit)
        ys.append(ys[-1])
    return float(_trapezoid(ys, xs)) / limit


def pixel_f1(pred: Sequence[MaskPlane], gt: Sequence[MaskPlane]) -> float:
    """Pooled F1 of binarized maps against GT masks."""
    if not pred or len(pred) != len(gt):
        raise ValidationError(
            f"need matching non-empty frame lists, got {len(pred)} vs {len(gt)}"
        )
    tp = fp = fn = 0
    for i, (p, g) in enumerate(zip(pred, gt)):
        if (p.width, p.height) != (g.width, g.height):
            raise ValidationError(f"frame {i}: prediction and GT dimensions differ")
        tp += int((p.bits & g.bits).sum())
        fp += int((p.bits & ~g.bits).sum())
        fn += int((~p.bits & g.bits).sum())
    if tp == 0 and fp == 0 and fn == 0:
        raise UndefinedMetricError("pixel_f1 is undefined when nothing is predicted or annotated")
    return 2.0 * tp / (2.0 * tp + fp + fn)


def per_frame_f1(pred: Sequence[MaskPlane], gt: Sequence[MaskPlane]) -> list[float | None]:
    """Frame-wise F1; None where a frame has neither prediction nor GT pixels."""
    if len(pred) != len(gt):
        raise ValidationError(f"need matching frame lists, got {len(pred)} vs {len(gt)}")
    out: list[float | None] = []
    for p, g in zip(pred, gt):
        tp = int((p.bits & g.bits).sum())
        fp = int((p.bits & ~g.bits).sum())
        fn = int((~p.bits & g.bits).sum())
        if tp == 0 and fp == 0 and fn == 0:
            out.append(None)
        else:
            out.append(2.0 * tp / (2.0 * tp + fp + fn))
    return out


# ---------------------------------------------------------------------------
# Region- and track-level metrics


def _sorted_detections(inp: ObjectEvalInput) -> list[tuple[int, DetectedRegion]]:
    flat = [
        (frame, det)
        for frame, dets in enumerate(inp.detections)
        for det in dets
    ]
    flat.sort(key=lambda fd: (-fd[1].score, fd[0], fd[1].bbox.to_record()))
    return flat


class _MatchState:
    """Greedy matcher: walks detections by descending score and tracks which
    GT regions and tracks have been validated so far."""

    def __init__(self, inp: ObjectEvalInput, coverage: float):
        self.inp = inp
        self.coverage = coverage
        self.total_regions = sum(len(r) for r in inp.gt_regions)
        self.track_sizes: dict[int, int] = {}
        for per_frame in inp.gt_regions:
            for region in per_frame:
                self.track_sizes[region.gt_track_id] = (
                    self.track_sizes.get(region.gt_track_id, 0) + 1
                )
        self.track_hits: dict[int, int] = {t: 0 for t in self.track_sizes}
        self.detected_tracks = 0
        self.matched: set[tuple[int, int]] = set()
        self.tp = 0
        self.fp = 0

    def feed(self, frame: int, det: DetectedRegion) -> None:
        candidates = []
        for region in self.inp.gt_regions[frame]:
            value = iou(det.bbox, region.bbox)
            if value >= self.inp.alpha:
                candidates.append((value, region.gt_track_id))
        if not candidates:
            self.fp += 1
            return
        fresh = [(v, t) for v, t in candidates if (frame, t) not in self.matched]
        if not fresh:
            # Overlaps only regions already validated: neither hit nor false.
            return
        fresh.sort(key=lambda vt: (-vt[0], vt[1]))
        _, track = fresh[0]
        self.matched.add((frame, track))
        self.tp += 1
        self.track_hits[track] += 1
        before = (self.track_hits[track] - 1) / self.track_sizes[track]
        after = self.track_hits[track] / self.track_sizes[track]
        if before < self.coverage <= after:
            self.detected_tracks += 1

    @property
    def region_fraction(self) -> float:
        return self.tp / self.total_regions

    @property
    def track_fraction(self) -> float:
        return self.detected_tracks / len(self.track_sizes)


def _object_metric(
    inp: ObjectEvalInput, coverage: float, mode: str, which: str
) -> tuple[float, dict]:
    if mode not in ("curve", "point"):
        raise ValidationError(f"mode must be 'curve' or 'point', got {mode!r}")
    if not (0.0 < coverage <= 1.0):
        raise ValidationError(f"coverage must lie in (0, 1], got {coverage!r}")
    state = _MatchState(inp, coverage)
    if state.total_regions == 0:
        raise UndefinedMetricError("object metrics need at least one GT region")
    flat = _sorted_detections(inp)
    n_frames = float(inp.frame_count)
    if mode == "point":
        for frame, det in flat:
            state.feed(frame, det)
        value = state.region_fraction if which == "rbdc" else state.track_fraction
        meta = {
            "mode": "point",
            "fp_count": state.fp,
            "fp_per_frame": state.fp / n_frames,
            "matched_regions": state.tp,
            "total_regions": state.total_regions,
            "detected_tracks": state.detected_tracks,
            "total_tracks": len(state.track_sizes),
        }
        return value, meta
    fprs: list[float] = []
    vals: list[float] = []
    curve: list[list[float]] = []
    for frame, det in flat:
        state.feed(frame, det)
        fprs.append(state.fp / n_frames)
        vals.append(state.region_fraction if which == "rbdc" else state.track_fraction)
        curve.append([det.score, fprs[-1], vals[-1]])
    area = _area_to_limit(fprs, vals, 1.0)
    meta = {
        "mode": "curve",
        "curve": curve,
        "total_regions": state.total_regions,
        "total_tracks": len(state.track_sizes),
    }
    return area, meta


def rbdc(inp: ObjectEvalInput, mode: str = "point") -> tuple[float, dict]:
    """Fraction of GT regions validated; curve mode integrates it against
    false-positive regions per frame over [0, 1]."""
    return _object_metric(inp, coverage=1.0, mode=mode, which="rbdc")


def tbdc(
    inp: ObjectEvalInput, coverage: float = DEFAULT_COVERAGE, mode: str = "point"
) -> tuple[float, dict]:
    """Fraction of GT tracks with at least `coverage` of their regions validated."""
    value, meta = _object_metric(inp, coverage=coverage, mode=mode, which="tbdc")
    meta["coverage"] = coverage
    return value, meta


def regions_from_masks(
    per_frame: Sequence[Mapping[int, MaskPlane]],
    label_scores: Mapping[int, float] | None = None,
    merge_h: float = 0.2,
) -> tuple[tuple[DetectedRegion, ...], ...]:
    """Detected regions from per-label segmentation masks.

    Per frame and label: connected components, then overlapping boxes of
    that label merged (same-object fragments); each region inherits the
    label's score (1.0 when unknown, the fixed operating point).
    """
    label_scores = dict(label_scores or {})
    out: list[tuple[DetectedRegion, ...]] = []
    for frame_masks in per_frame:
        regions: list[DetectedRegion] = []
        for label in sorted(frame_masks):
            mask = frame_masks[label]
            components = connected_components(mask)
            if not components:
                continue
            boxes = merge_overlapping([c.bbox for c in components], merge_h)
            score = label_scores.get(label, 1.0)
            regions.extend(DetectedRegion(bbox=b, score=score) for b in boxes)
        out.append(tuple(regions))
    return tuple(out)


def evaluate_segmentation(
    per_frame: Sequence[Mapping[int, MaskPlane]],
    gt: GroundTruth,
    label_scores: Mapping[int, float] | None = None,
    *,
    alpha: float = DEFAULT_ALPHA,
    coverage: float = DEFAULT_COVERAGE,
    fpr_limit: float = DEFAULT_FPR_LIMIT,
    mode: str = "point",
    merge_h: float = 0.2,
) -> MetricsReport:
    """Full dual-level report for one clip's segmentation output.

    Metrics that are undefined on this input come back as None with the
    reason recorded in metadata["undefined"].
    """
    if len(per_frame) != gt.frame_count:
        raise ValidationError(
            f"segmentation covers {len(per_frame)} frames but GT has {gt.frame_count}"
        )
    union: list[MaskPlane] = []
    for frame_masks in per_frame:
        bits = np.zeros((gt.height, gt.width), dtype=bool)
        for mask in frame_masks.values():
            if (mask.width, mask.height) != (gt.width, gt.height):
                raise ValidationError("segmentation mask dimensions differ from GT")
            bits |= mask.bits
        union.append(MaskPlane(gt.width, gt.height, bits))
    pixel_inp = PixelEvalInput.from_masks(union, gt.frames)
    object_inp = ObjectEvalInput(
        detections=regions_from_masks(per_frame, label_scores, merge_h),
        gt_regions=gt.regions,
        alpha=alpha,
    )
    values: dict[str, float | None] = {}
    undefined: dict[str, str] = {}
    metadata: dict = {"mode": mode, "alpha": alpha, "coverage": coverage, "fpr_limit": fpr_limit}

    def _attempt(name, fn):
        try:
            values[name] = fn()
        except UndefinedMetricError as exc:
            values[name] = None
            undefined[name] = str(exc)

    _attempt("pixel_auroc", lambda: pixel_auroc(pixel_inp))
    _attempt("pixel_ap", lambda: pixel_ap(pixel_inp))
    _attempt("pixel_aupro", lambda: pixel_aupro(pixel_inp, fpr_limit))
    _attempt("pixel_f1", lambda: pixel_f1(union, list(gt.frames)))

    def _rbdc():
        value, meta = rbdc(object_inp, mode=mode)
        metadata["rbdc"] = meta
        return value

    def _tbdc():
        value, meta = tbdc(object_inp, coverage=coverage, mode=mode)
        metadata["tbdc"] = meta
        return value

    _attempt("rbdc", _rbdc)
    _attempt("tbdc", _tbdc)
    if undefined:
        metadata["undefined"] = undefined
    return MetricsReport(metadata=metadata, **values)
