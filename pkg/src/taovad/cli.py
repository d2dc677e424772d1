"""Command-line surface: synth, filter, segment, eval, pipeline, ablate.

Every command writes a run manifest before touching its outputs, so a
crashed run leaves evidence of what it was asked to do. Manifests carry
timestamps and are the one artifact excluded from byte-identity checks;
everything else a command writes is canonical and reproducible.

Exit codes: 0 success, 2 validation, 3 I/O, 4 backend/protocol,
5 undefined-metric.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import shlex
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Mapping, Sequence

from .errors import (
    IngestError,
    ProtocolError,
    UndefinedMetricError,
    ValidationError,
)
from .metrics import (
    DEFAULT_ALPHA,
    DEFAULT_COVERAGE,
    DEFAULT_FPR_LIMIT,
    MetricsReport,
    aupro_samples,
    evaluate_segmentation,
    PixelEvalInput,
)
from .model import (
    GroundTruth,
    MaskPlane,
    PipelineParams,
    PROFILES,
    TrackedBox,
)
from .pipeline import (
    FilterTrace,
    FrameDetections,
    aggregate_prompts,
    group_by_frame,
    raw_prompt_scores,
    raw_prompts,
    robustness_filter,
    threshold_filter,
)
from .segmenter import (
    DEFAULT_MATCH_IOU,
    DriftBackend,
    DriftParams,
    ExternalBackend,
    OracleBackend,
    SegmentationRequest,
    SegmentationResult,
    segment,
    segment_frame_isolated,
)
from . import storage, synth
from .segmenter import rect_mask

log = logging.getLogger("taovad")

GT_DOC_KIND = "ground-truth"
TRACE_DOC_KIND = "filter-trace"


def _setup_logging():
    level_name = os.environ.get("TAO_LOG", "WARNING").upper()
    level = getattr(logging, level_name, None)
    if not isinstance(level, int):
        level = logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


# ---------------------------------------------------------------------------
# Run manifests


@dataclasses.dataclass(frozen=True)
class RunManifest:
    command: str
    params: dict | None
    seeds: tuple[int, ...]
    inputs: dict[str, str]
    outputs: dict[str, str]
    toggles: dict[str, bool]
    created: str

    @classmethod
    def build(
        cls,
        command: str,
        *,
        params: PipelineParams | None = None,
        seeds: Sequence[int] = (),
        inputs: Mapping[str, str | Path] | None = None,
        outputs: Mapping[str, str | Path] | None = None,
        toggles: Mapping[str, bool] | None = None,
    ) -> "RunManifest":
        return cls(
            command=command,
            params=params.to_record() if params is not None else None,
            seeds=tuple(int(s) for s in seeds),
            inputs={k: str(v) for k, v in (inputs or {}).items()},
            outputs={k: str(v) for k, v in (outputs or {}).items()},
            toggles=dict(toggles or {}),
            created=datetime.now(timezone.utc).isoformat(),
        )

    def write(self, path: str | Path) -> None:
        doc = dataclasses.asdict(self)
        doc["seeds"] = list(self.seeds)
        Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def _manifest_path(out: str | Path) -> Path:
    return Path(str(out) + ".manifest.json")


# ---------------------------------------------------------------------------
# Flag parsing helpers


def _parse_kv(text: str, what: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for chunk in text.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        if "=" not in chunk:
            raise ValidationError(f"{what} entry {chunk!r} is not of the form key=value")
        key, value = chunk.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def build_params(profile: str | None, params_text: str | None) -> PipelineParams:
    if profile is not None:
        if profile not in PROFILES:
            raise ValidationError(f"unknown profile {profile!r}; choose from {sorted(PROFILES)}")
        params = PROFILES[profile]
    else:
        params = PipelineParams()
    if not params_text:
        return params
    fields = {"tau": float, "k": int, "m": int, "h": float, "l": int}
    updates = {}
    for key, raw in _parse_kv(params_text, "--params").items():
        if key not in fields:
            raise ValidationError(f"unknown pipeline parameter {key!r}; choose from {sorted(fields)}")
        try:
            updates[key] = fields[key](raw)
        except ValueError as exc:
            raise ValidationError(f"--params {key}={raw!r}: {exc}") from exc
    return dataclasses.replace(params, **updates)


def build_drift(drift_text: str | None, seed: int | None = None) -> DriftParams:
    params = DriftParams()
    if drift_text:
        fields = {"p": float, "step": float, "capacity": int, "seed": int}
        names = {"p": "p_drift", "step": "drift_step", "capacity": "capacity", "seed": "seed"}
        updates = {}
        for key, raw in _parse_kv(drift_text, "--drift").items():
            if key not in fields:
                raise ValidationError(f"unknown drift parameter {key!r}; choose from {sorted(fields)}")
            try:
                updates[names[key]] = fields[key](raw)
            except ValueError as exc:
                raise ValidationError(f"--drift {key}={raw!r}: {exc}") from exc
        params = dataclasses.replace(params, **updates)
    if seed is not None:
        params = dataclasses.replace(params, seed=seed)
    return params


# ---------------------------------------------------------------------------
# Ground truth and trace documents


def save_ground_truth(path: str | Path, gt: GroundTruth) -> None:
    record = {"kind": GT_DOC_KIND}
    record.update(storage.ground_truth_to_record(gt))
    storage.write_scenario(path, record)


def load_ground_truth(path: str | Path) -> GroundTruth:
    path = Path(path)
    if path.is_dir():
        return storage.ingest_dataset_masks(path)
    record = storage.read_scenario(path)
    if record.get("kind") != GT_DOC_KIND:
        raise ValidationError(
            f"{path}: expected a {GT_DOC_KIND!r} document, got kind={record.get('kind')!r}"
        )
    record.pop("kind")
    return storage.ground_truth_from_record(record)


def save_trace(path: str | Path, trace: FilterTrace) -> None:
    record = {
        "kind": TRACE_DOC_KIND,
        "params": trace.params.to_record(),
        "label_scores": {str(k): v for k, v in sorted(trace.label_scores().items())},
        "frames": [
            {
                "frame": ft.frame_idx,
                "inherited": [[det.to_record(), label] for det, label in ft.inherited],
                "assigned": [[det.to_record(), label] for det, label in ft.assigned],
                "discarded": [det.to_record() for det in ft.discarded],
                "saved": [trk.to_record() for trk in ft.saved],
            }
            for ft in trace.frames
        ],
    }
    storage.write_scenario(path, record)


def load_label_scores(path: str | Path) -> dict[int, float]:
    record = storage.read_scenario(path)
    if record.get("kind") != TRACE_DOC_KIND:
        raise ValidationError(
            f"{path}: expected a {TRACE_DOC_KIND!r} document, got kind={record.get('kind')!r}"
        )
    raw = record.get("label_scores", {})
    if not isinstance(raw, dict):
        raise ValidationError(f"{path}: label_scores must be a mapping")
    out: dict[int, float] = {}
    for key, value in raw.items():
        try:
            out[int(key)] = float(value)
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"{path}: bad label_scores entry {key!r}: {value!r}") from exc
    return out


# ---------------------------------------------------------------------------
# Pipeline building blocks shared by pipeline/ablate and reusable as a library


def make_backend(
    spec: str,
    gt: GroundTruth | None,
    drift: DriftParams,
    match_iou: float = DEFAULT_MATCH_IOU,
):
    if spec == "oracle" or spec == "drift":
        if gt is None:
            raise ValidationError(f"the {spec} backend needs ground truth (--gt)")
        if spec == "oracle":
            return OracleBackend(gt, match_iou)
        return DriftBackend(gt, drift, match_iou)
    if spec.startswith("external:"):
        command = shlex.split(spec[len("external:"):])
        if not command:
            raise ValidationError("external backend command is empty")
        return ExternalBackend(command)
    raise ValidationError(
        f"unknown backend {spec!r}; choose oracle, drift, or external:<command>"
    )


def run_pipeline_variant(
    gt: GroundTruth,
    frames: Sequence[FrameDetections],
    params: PipelineParams,
    *,
    filtered: bool = True,
    tracked: bool = True,
    backend_spec: str = "drift",
    drift: DriftParams | None = None,
    match_iou: float = DEFAULT_MATCH_IOU,
) -> tuple[SegmentationResult, dict[int, float]]:
    """Detections through prompts to masks under the four ablation toggles."""
    drift = drift or DriftParams()
    kept = threshold_filter(frames, params.tau)
    if filtered:
        tracked_boxes, trace = robustness_filter(kept, params)
        prompts = aggregate_prompts(tracked_boxes, params.l)
        label_scores = trace.label_scores()
    else:
        prompts = raw_prompts(kept, params.l)
        label_scores = raw_prompt_scores(kept, params.l)
    request = SegmentationRequest(
        frame_count=len(frames),
        width=gt.width,
        height=gt.height,
        prompts=tuple(prompts),
    )
    if tracked:
        backend = make_backend(backend_spec, gt, drift, match_iou)
        result = segment(request, backend)
    else:
        if backend_spec.startswith("external:"):
            raise ValidationError("--no-track supports the builtin backends only")
        result = segment_frame_isolated(request, gt, match_iou)
    return result, label_scores


def tracks_to_masks(
    tracked: Sequence[TrackedBox], frame_count: int, width: int, height: int
) -> list[dict[int, MaskPlane]]:
    """Rasterize tracked boxes so box files can be evaluated like masks."""
    per_frame: list[dict[int, MaskPlane]] = [{} for _ in range(frame_count)]
    for box in tracked:
        if box.frame_idx >= frame_count:
            raise ValidationError(
                f"tracked box at frame {box.frame_idx} out of range for {frame_count} frames"
            )
        frame = per_frame[box.frame_idx]
        mask = rect_mask(box.bbox, width, height)
        existing = frame.get(box.track_label)
        frame[box.track_label] = mask if existing is None else existing.union(mask)
    return per_frame


# ---------------------------------------------------------------------------
# Commands


def cmd_synth(args) -> int:
    if (args.preset is None) == (args.config is None):
        raise ValidationError("choose exactly one of --preset or --config")
    if args.preset is not None:
        if args.preset not in synth.PRESETS:
            raise ValidationError(
                f"unknown preset {args.preset!r}; choose from {sorted(synth.PRESETS)}"
            )
        config = synth.PRESETS[args.preset](args.seed or 0)
    else:
        config = synth.ScenarioConfig.from_record(storage.read_scenario(args.config))
        if args.seed is not None:
            config = dataclasses.replace(config, seed=args.seed)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "config": out_dir / "config.json",
        "gt": out_dir / "gt.json",
        "detections": out_dir / "detections.jsonl",
    }
    RunManifest.build(
        "synth",
        seeds=[config.seed],
        inputs={} if args.config is None else {"config": args.config},
        outputs=paths,
    ).write(out_dir / "manifest.json")
    gt, frames = synth.generate(config)
    storage.write_scenario(paths["config"], config.to_record())
    save_ground_truth(paths["gt"], gt)
    detections = [d for fr in frames for d in fr.detections]
    storage.write_detections(paths["detections"], detections, frames=len(frames), width=gt.width, height=gt.height)
    log.info("synth: %d frames, %d detections", len(frames), len(detections))
    return 0


def cmd_filter(args) -> int:
    params = build_params(args.profile, args.params)
    detections, meta = storage.read_detections(args.input)
    frames = group_by_frame(detections, meta["frames"])
    kept = threshold_filter(frames, params.tau)
    tracked, trace = robustness_filter(kept, params)
    out = Path(args.out)
    trace_path = Path(args.trace) if args.trace else Path(str(out) + ".trace.json")
    RunManifest.build(
        "filter",
        params=params,
        inputs={"detections": args.input},
        outputs={"tracks": out, "trace": trace_path},
        toggles={"filtering": True},
    ).write(_manifest_path(out))
    storage.write_tracked(out, tracked, frames=meta["frames"], width=meta["width"], height=meta["height"])
    save_trace(trace_path, trace)
    log.info("filter: %d detections -> %d saved tuples", len(detections), len(tracked))
    return 0


def cmd_segment(args) -> int:
    params = build_params(args.profile, args.params)
    tracked, meta = storage.read_tracked(args.tracks)
    prompts = aggregate_prompts(tracked, params.l)
    gt = load_ground_truth(args.gt) if args.gt else None
    if gt is not None and (gt.width, gt.height, gt.frame_count) != (
        meta["width"],
        meta["height"],
        meta["frames"],
    ):
        raise ValidationError(
            f"{args.gt}: ground truth geometry {gt.width}x{gt.height}x{gt.frame_count} does not "
            f"match the tracks file {meta['width']}x{meta['height']}x{meta['frames']}"
        )
    drift = build_drift(args.drift)
    out = Path(args.out)
    outputs = {"masks": out}
    if args.prompts:
        outputs["prompts"] = Path(args.prompts)
    RunManifest.build(
        "segment",
        params=params,
        inputs={"tracks": args.tracks, **({"gt": args.gt} if args.gt else {})},
        outputs=outputs,
        toggles={"tracking": not args.no_track},
    ).write(_manifest_path(out))
    if args.prompts:
        storage.write_prompts(args.prompts, prompts, frames=meta["frames"], width=meta["width"], height=meta["height"])
    request = SegmentationRequest(
        frame_count=meta["frames"],
        width=meta["width"],
        height=meta["height"],
        prompts=tuple(prompts),
        frames_dir=args.frames_dir,
    )
    if args.no_track:
        if args.backend.startswith("external:"):
            raise ValidationError("--no-track supports the builtin backends only")
        if gt is None:
            raise ValidationError("--no-track needs ground truth (--gt)")
        result = segment_frame_isolated(request, gt, args.match_iou)
    else:
        backend = make_backend(args.backend, gt, drift, args.match_iou)
        result = segment(request, backend)
    storage.write_masks(out, result.masks, width=meta["width"], height=meta["height"])
    log.info("segment: %d prompts -> %d labels", len(prompts), len(result.labels))
    return 0


def _load_prediction(path: str) -> tuple[list[dict[int, MaskPlane]], dict]:
    fmt = storage.peek_format(path)
    if fmt == storage.FORMAT_MASKS:
        return storage.read_masks(path)
    if fmt == storage.FORMAT_TRACKS:
        tracked, meta = storage.read_tracked(path)
        return tracks_to_masks(tracked, meta["frames"], meta["width"], meta["height"]), meta
    raise ValidationError(
        f"{path}: cannot evaluate a {fmt!r} file; expected "
        f"{storage.FORMAT_MASKS!r} or {storage.FORMAT_TRACKS!r}"
    )


def _union_masks(per_frame, gt: GroundTruth) -> list[MaskPlane]:
    out = []
    for frame in per_frame:
        merged = MaskPlane.empty(gt.width, gt.height)
        for mask in frame.values():
            merged = merged.union(mask)
        out.append(merged)
    return out


def _dump_curves(path: str | Path, report: MetricsReport, per_frame, gt: GroundTruth) -> None:
    lines = ["metric,threshold,x,y"]
    try:
        samples = aupro_samples(PixelEvalInput.from_masks(_union_masks(per_frame, gt), gt.frames))
    except UndefinedMetricError:
        samples = []
    for t, x, y in samples:
        lines.append(f"pixel_aupro,{t!r},{x!r},{y!r}")
    for name in ("rbdc", "tbdc"):
        meta = report.metadata.get(name, {})
        for t, x, y in meta.get("curve", []):
            lines.append(f"{name},{t!r},{x!r},{y!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def cmd_eval(args) -> int:
    per_frame, meta = _load_prediction(args.pred)
    gt = load_ground_truth(args.gt)
    if (gt.width, gt.height, gt.frame_count) != (meta["width"], meta["height"], meta["frames"]):
        raise ValidationError(
            f"prediction geometry {meta['width']}x{meta['height']}x{meta['frames']} does not "
            f"match ground truth {gt.width}x{gt.height}x{gt.frame_count}"
        )
    label_scores = load_label_scores(args.label_scores) if args.label_scores else None
    if args.out:
        RunManifest.build(
            "eval",
            inputs={"pred": args.pred, "gt": args.gt},
            outputs={"report": args.out},
        ).write(_manifest_path(args.out))
    report = evaluate_segmentation(
        per_frame,
        gt,
        label_scores,
        alpha=args.alpha,
        coverage=args.coverage,
        fpr_limit=args.fpr_limit,
        mode=args.mode,
        merge_h=args.merge_h,
    )
    if args.out:
        Path(args.out).write_text(report.to_text(), encoding="utf-8")
    if args.json:
        Path(args.json).write_text(
            json.dumps(report.to_record(), indent=2, allow_nan=False) + "\n", encoding="utf-8"
        )
    if args.dump_curves:
        _dump_curves(args.dump_curves, report, per_frame, gt)
    sys.stdout.write(report.to_text())
    if all(value is None for value in report.values().values()):
        raise UndefinedMetricError(
            "every requested metric is undefined on this input: "
            + "; ".join(report.metadata.get("undefined", {}).values())
        )
    return 0


def cmd_pipeline(args) -> int:
    if (args.preset is None) == (args.config is None):
        raise ValidationError("choose exactly one of --preset or --config")
    params = build_params(args.profile, args.params)
    if args.preset is not None:
        if args.preset not in synth.PRESETS:
            raise ValidationError(
                f"unknown preset {args.preset!r}; choose from {sorted(synth.PRESETS)}"
            )
        config = synth.PRESETS[args.preset](args.seed or 0)
    else:
        config = synth.ScenarioConfig.from_record(storage.read_scenario(args.config))
        if args.seed is not None:
            config = dataclasses.replace(config, seed=args.seed)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    filtered = not args.no_filter
    tracked = not args.no_track
    paths = {
        "config": out_dir / "config.json",
        "gt": out_dir / "gt.json",
        "detections": out_dir / "detections.jsonl",
        "masks": out_dir / "masks.jsonl",
        "report": out_dir / "report.txt",
        "report_json": out_dir / "report.json",
    }
    if filtered:
        paths["tracks"] = out_dir / "tracks.jsonl"
        paths["trace"] = out_dir / "trace.json"
    RunManifest.build(
        "pipeline",
        params=params,
        seeds=[config.seed],
        inputs={} if args.config is None else {"config": args.config},
        outputs=paths,
        toggles={"tracking": tracked, "filtering": filtered},
    ).write(out_dir / "manifest.json")

    gt, frames = synth.generate(config)
    storage.write_scenario(paths["config"], config.to_record())
    save_ground_truth(paths["gt"], gt)
    detections = [d for fr in frames for d in fr.detections]
    storage.write_detections(paths["detections"], detections, frames=len(frames), width=gt.width, height=gt.height)
    if filtered:
        kept = threshold_filter(frames, params.tau)
        tracked_boxes, trace = robustness_filter(kept, params)
        storage.write_tracked(paths["tracks"], tracked_boxes, frames=len(frames), width=gt.width, height=gt.height)
        save_trace(paths["trace"], trace)
    result, label_scores = run_pipeline_variant(
        gt,
        frames,
        params,
        filtered=filtered,
        tracked=tracked,
        backend_spec=args.backend,
        drift=build_drift(args.drift),
        match_iou=args.match_iou,
    )
    storage.write_masks(paths["masks"], result.masks, width=gt.width, height=gt.height)
    report = evaluate_segmentation(
        result.masks,
        gt,
        label_scores,
        alpha=args.alpha,
        coverage=args.coverage,
        fpr_limit=args.fpr_limit,
        mode=args.mode,
        merge_h=params.h,
    )
    paths["report"].write_text(report.to_text(), encoding="utf-8")
    paths["report_json"].write_text(
        json.dumps(report.to_record(), indent=2, allow_nan=False) + "\n", encoding="utf-8"
    )
    sys.stdout.write(report.to_text())
    return 0


ABLATION_ROWS = ((True, True), (True, False), (False, True), (False, False))
ABLATION_METRICS = ("pixel_f1", "rbdc", "tbdc")


def ablation_grid(
    preset: str,
    seeds: Sequence[int],
    params: PipelineParams,
    drift: DriftParams,
    *,
    alpha: float = DEFAULT_ALPHA,
    coverage: float = DEFAULT_COVERAGE,
    mode: str = "point",
) -> dict[tuple[bool, bool], dict[str, float | None]]:
    """Seed-averaged (tracked, filtered) grid on one preset.

    The same scenario and drift seeds feed all four rows, so rows differ
    only by the toggles. A metric undefined on any seed stays undefined in
    the row average.
    """
    if preset not in synth.PRESETS:
        raise ValidationError(f"unknown preset {preset!r}; choose from {sorted(synth.PRESETS)}")
    if not seeds:
        raise ValidationError("ablation needs at least one seed")
    sums: dict[tuple[bool, bool], dict[str, float]] = {row: dict.fromkeys(ABLATION_METRICS, 0.0) for row in ABLATION_ROWS}
    broken: dict[tuple[bool, bool], set[str]] = {row: set() for row in ABLATION_ROWS}
    for seed in seeds:
        config = synth.PRESETS[preset](seed)
        gt, frames = synth.generate(config)
        seeded_drift = dataclasses.replace(drift, seed=seed)
        for row in ABLATION_ROWS:
            tracked, filtered = row
            result, label_scores = run_pipeline_variant(
                gt,
                frames,
                params,
                filtered=filtered,
                tracked=tracked,
                backend_spec="drift",
                drift=seeded_drift,
            )
            report = evaluate_segmentation(
                result.masks,
                gt,
                label_scores,
                alpha=alpha,
                coverage=coverage,
                mode=mode,
                merge_h=params.h,
            )
            for name in ABLATION_METRICS:
                value = getattr(report, name)
                if value is None:
                    broken[row].add(name)
                else:
                    sums[row][name] += value
        log.info("ablate: finished seed %d", seed)
    out: dict[tuple[bool, bool], dict[str, float | None]] = {}
    for row in ABLATION_ROWS:
        out[row] = {
            name: (None if name in broken[row] else sums[row][name] / len(seeds))
            for name in ABLATION_METRICS
        }
    return out


def format_ablation_table(grid: Mapping[tuple[bool, bool], Mapping[str, float | None]]) -> str:
    def cell(value: float | None) -> str:
        return "undefined" if value is None else f"{value * 100.0:.2f}"

    lines = ["track filter " + " ".join(f"{name:>9}" for name in ABLATION_METRICS)]
    for tracked, filtered in ABLATION_ROWS:
        row = grid[(tracked, filtered)]
        lines.append(
            f"{'on' if tracked else 'off':<5} {'on' if filtered else 'off':<6} "
            + " ".join(f"{cell(row[name]):>9}" for name in ABLATION_METRICS)
        )
    return "\n".join(lines) + "\n"


def _parse_seeds(text: str) -> list[int]:
    text = text.strip()
    if ":" in text:
        lo, hi = text.split(":", 1)
        try:
            lo_i, hi_i = int(lo), int(hi)
        except ValueError as exc:
            raise ValidationError(f"bad seed range {text!r}") from exc
        if hi_i <= lo_i:
            raise ValidationError(f"empty seed range {text!r}")
        return list(range(lo_i, hi_i))
    try:
        return [int(chunk) for chunk in text.split(",") if chunk.strip()]
    except ValueError as exc:
        raise ValidationError(f"bad seed list {text!r}") from exc


def cmd_ablate(args) -> int:
    params = build_params(args.profile, args.params)
    seeds = _parse_seeds(args.seeds)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {"table": out_dir / "table.txt", "table_json": out_dir / "table.json"}
    RunManifest.build(
        "ablate",
        params=params,
        seeds=seeds,
        outputs=paths,
    ).write(out_dir / "manifest.json")
    grid = ablation_grid(
        args.preset,
        seeds,
        params,
        build_drift(args.drift),
        alpha=args.alpha,
        coverage=args.coverage,
        mode=args.mode,
    )
    table = format_ablation_table(grid)
    paths["table"].write_text(table, encoding="utf-8")
    doc = {
        "preset": args.preset,
        "seeds": seeds,
        "rows": [
            {"tracked": tracked, "filtered": filtered, **grid[(tracked, filtered)]}
            for tracked, filtered in ABLATION_ROWS
        ],
    }
    paths["table_json"].write_text(json.dumps(doc, indent=2, allow_nan=False) + "\n", encoding="utf-8")
    sys.stdout.write(table)
    return 0


# ---------------------------------------------------------------------------
# Argument wiring


def _add_eval_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--mode", choices=("point", "curve"), default="point")
    parser.add_argument("--alpha", type=float, default=DEFAULT_ALPHA)
    parser.add_argument("--coverage", type=float, default=DEFAULT_COVERAGE)
    parser.add_argument("--fpr-limit", type=float, default=DEFAULT_FPR_LIMIT)


def _add_param_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--profile", choices=sorted(PROFILES), default=None)
    parser.add_argument("--params", default=None, help="comma list: tau=..,k=..,m=..,h=..,l=..")


def build_arg_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="taovad",
        description="Anomalous-box filtering, prompt segmentation, and dual-level evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a seeded synthetic scenario")
    p.add_argument("--preset", default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("filter", help="threshold + temporal voting over detections")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--trace", default=None)
    _add_param_flags(p)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("segment", help="turn saved tracks into masks via a backend")
    p.add_argument("--tracks", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--backend", default="oracle")
    p.add_argument("--gt", default=None)
    p.add_argument("--prompts", default=None, help="also write the aggregated prompts here")
    p.add_argument("--frames-dir", default=None)
    p.add_argument("--drift", default=None, help="comma list: p=..,step=..,capacity=..,seed=..")
    p.add_argument("--match-iou", type=float, default=DEFAULT_MATCH_IOU)
    p.add_argument("--no-track", action="store_true")
    _add_param_flags(p)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("eval", help="dual-level metrics for masks or tracks against GT")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--label-scores", default=None, help="filter trace document")
    p.add_argument("--merge-h", type=float, default=0.2)
    p.add_argument("--out", default=None)
    p.add_argument("--json", default=None)
    p.add_argument("--dump-curves", default=None)
    _add_eval_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("pipeline", help="synth -> filter -> segment -> eval in one run")
    p.add_argument("--preset", default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--backend", default="drift")
    p.add_argument("--drift", default=None)
    p.add_argument("--match-iou", type=float, default=DEFAULT_MATCH_IOU)
    p.add_argument("--no-track", action="store_true")
    p.add_argument("--no-filter", action="store_true")
    _add_param_flags(p)
    _add_eval_flags(p)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("ablate", help="2x2 tracking/filtering grid, seed-averaged")
    p.add_argument("--preset", default="fig3")
    p.add_argument("--seeds", default="0:10", help="range lo:hi or comma list")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--drift", default=None)
    _add_param_flags(p)
    _add_eval_flags(p)
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    _setup_logging()
    parser = build_arg_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UndefinedMetricError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 5
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ProtocolError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except IngestError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
