"""Serialization: line-delimited artifacts, the RLE mask codec, and dataset ingest.

Every artifact file starts with a one-line JSON header carrying its format
version plus clip metadata, followed by one JSON record per line. Writers
emit canonically sorted records with compact separators, so identical
values always produce identical bytes; parsers are strict and report the
offending line on any malformed or unknown content.

Formats:
    tao-det/1   detections          {"frame", "box", "label", "score"}
    tao-trk/1   tracked boxes       {"frame", "label", "box"}
    tao-prm/1   prompts             {"frame", "label", "box", "center"}
    tao-rle/1   per-label masks     {"frame", "label", "rle"}
    tao-cfg/1   scenario config     single JSON document
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import geometry
from .errors import FormatError, IngestError, ValidationError
from .model import BBox, Detection, GroundTruth, GTRegion, MaskPlane, Prompt, TrackedBox

FORMAT_DETECTIONS = "tao-det/1"
FORMAT_TRACKS = "tao-trk/1"
FORMAT_PROMPTS = "tao-prm/1"
FORMAT_MASKS = "tao-rle/1"
FORMAT_SCENARIO = "tao-cfg/1"

# Frame-to-frame IoU needed to join GT components into one track when the
# source annotation has no explicit track ids.
GT_LINK_IOU = 0.3


# ---------------------------------------------------------------------------
# RLE codec


@dataclass(frozen=True)
class RleMask:
    """Run-length encoded binary mask.

    Runs alternate zero/one counts over the row-major pixel stream and start
    with a zero run, which is the only run allowed to be empty. Run counts
    always sum to width * height.
    """

    width: int
    height: int
    runs: tuple[int, ...]

    def __post_init__(self):
        if not isinstance(self.width, int) or not isinstance(self.height, int):
            raise ValidationError("rle dimensions must be ints")
        if self.width <= 0 or self.height <= 0:
            raise ValidationError(f"rle dimensions must be positive, got {self.width}x{self.height}")
        runs = tuple(self.runs)
        if not runs:
            raise ValidationError("rle must contain at least one run")
        for i, run in enumerate(runs):
            if isinstance(run, bool) or not isinstance(run, int):
                raise ValidationError(f"rle run {i} must be an int, got {run!r}")
            if run < 0:
                raise ValidationError(f"rle run {i} must be non-negative, got {run}")
            if run == 0 and i > 0:
                raise ValidationError(f"rle run {i} is zero; only the leading zero-run may be empty")
        total = sum(runs)
        if total != self.width * self.height:
            raise ValidationError(
                f"rle runs sum to {total}, expected {self.width * self.height}"
            )
        object.__setattr__(self, "runs", runs)


def rle_encode(mask: MaskPlane) -> RleMask:
    flat = mask.bits.ravel()
    if flat.size == 0:
        raise ValidationError("cannot encode an empty-dimension mask")
    changes = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], changes, [flat.size]))
    lengths = np.diff(bounds).tolist()
    runs = [int(v) for v in lengths]
    if flat[0]:
        runs = [0] + runs
    return RleMask(mask.width, mask.height, tuple(runs))


def rle_decode(rle: RleMask) -> MaskPlane:
    out = np.empty(rle.width * rle.height, dtype=bool)
    pos = 0
    value = False
    for run in rle.runs:
        out[pos : pos + run] = value
        pos += run
        value = not value
    return MaskPlane(rle.width, rle.height, out.reshape(rle.height, rle.width))


# ---------------------------------------------------------------------------
# Line-delimited artifact files


def _dumps(obj) -> str:
    return json.dumps(obj, separators=(",", ":"), allow_nan=False)


def _header(fmt: str, frames: int, width: int, height: int) -> dict:
    if not isinstance(frames, int) or frames < 0:
        raise ValidationError(f"frame count must be a non-negative int, got {frames!r}")
    if not isinstance(width, int) or not isinstance(height, int) or width <= 0 or height <= 0:
        raise ValidationError(f"clip dimensions must be positive ints, got {width!r}x{height!r}")
    return {"format": fmt, "frames": frames, "width": width, "height": height}


def _parse_json_line(raw: str, path: str, line_no: int):
    try:
        return json.loads(raw)
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid JSON ({exc.msg})", path=path, line=line_no) from None


def _read_lines(path: Path) -> list[str]:
    text = path.read_text(encoding="utf-8")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    return lines


def _parse_header(lines: list[str], fmt: str, path: str) -> dict:
    if not lines:
        raise FormatError("file is empty, expected a header line", path=path, line=1)
    header = _parse_json_line(lines[0], path, 1)
    expected = {"format", "frames", "width", "height"}
    if not isinstance(header, dict) or set(header.keys()) != expected:
        raise FormatError(
            f"header must contain exactly the keys {sorted(expected)}", path=path, line=1
        )
    if header["format"] != fmt:
        raise FormatError(
            f"unsupported format {header['format']!r}, expected {fmt!r}", path=path, line=1
        )
    for key in ("frames", "width", "height"):
        v = header[key]
        if isinstance(v, bool) or not isinstance(v, int) or v < 0 or (key != "frames" and v == 0):
            raise FormatError(f"header field {key!r} must be a positive int", path=path, line=1)
    return {"frames": header["frames"], "width": header["width"], "height": header["height"]}


def _check_frame(frame: int, meta: dict, path: str, line_no: int):
    if frame >= meta["frames"]:
        raise FormatError(
            f"frame index {frame} out of range for a {meta['frames']}-frame clip",
            path=path,
            line=line_no,
        )


def _wrap_record_error(exc: ValidationError, path: str, line_no: int) -> FormatError:
    return FormatError(str(exc), path=path, line=line_no)


def peek_format(path: str | Path) -> str:
    """Read just the format tag from a line-delimited artifact file."""
    path = Path(path)
    try:
        with path.open("r", encoding="utf-8") as fh:
            first = fh.readline()
    except OSError as exc:
        raise IngestError(f"{path}: cannot read ({exc})") from exc
    if not first.strip():
        raise FormatError("file is empty, expected a header line", path=str(path), line=1)
    header = _parse_json_line(first, str(path), 1)
    if not isinstance(header, dict) or not isinstance(header.get("format"), str):
        raise FormatError("header has no format tag", path=str(path), line=1)
    return header["format"]


def write_detections(
    path: str | Path, detections: Iterable[Detection], *, frames: int, width: int, height: int
) -> None:
    records = sorted(
        detections,
        key=lambda d: (d.frame_idx, d.class_label, d.anomaly_score, d.bbox.to_record()),
    )
    for d in records:
        if d.frame_idx >= frames:
            raise ValidationError(
                f"detection at frame {d.frame_idx} out of range for a {frames}-frame clip"
            )
    lines = [_dumps(_header(FORMAT_DETECTIONS, frames, width, height))]
    lines.extend(_dumps(d.to_record()) for d in records)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_detections(path: str | Path) -> tuple[list[Detection], dict]:
    path = Path(path)
    lines = _read_lines(path)
    meta = _parse_header(lines, FORMAT_DETECTIONS, str(path))
    out: list[Detection] = []
    for line_no, raw in enumerate(lines[1:], start=2):
        rec = _parse_json_line(raw, str(path), line_no)
        try:
            det = Detection.from_record(rec)
        except ValidationError as exc:
            raise _wrap_record_error(exc, str(path), line_no) from None
        _check_frame(det.frame_idx, meta, str(path), line_no)
        out.append(det)
    return out, meta


def write_tracked(
    path: str | Path, tracked: Iterable[TrackedBox], *, frames: int, width: int, height: int
) -> None:
    records = sorted(tracked, key=lambda t: (t.frame_idx, t.track_label, t.bbox.to_record()))
    for t in records:
        if t.frame_idx >= frames:
            raise ValidationError(
                f"tracked box at frame {t.frame_idx} out of range for a {frames}-frame clip"
            )
    lines = [_dumps(_header(FORMAT_TRACKS, frames, width, height))]
    lines.extend(_dumps(t.to_record()) for t in records)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_tracked(path: str | Path) -> tuple[list[TrackedBox], dict]:
    path = Path(path)
    lines = _read_lines(path)
    meta = _parse_header(lines, FORMAT_TRACKS, str(path))
    out: list[TrackedBox] = []
    for line_no, raw in enumerate(lines[1:], start=2):
        rec = _parse_json_line(raw, str(path), line_no)
        try:
            tb = TrackedBox.from_record(rec)
        except ValidationError as exc:
            raise _wrap_record_error(exc, str(path), line_no) from None
        _check_frame(tb.frame_idx, meta, str(path), line_no)
        out.append(tb)
    return out, meta


def write_prompts(
    path: str | Path, prompts: Iterable[Prompt], *, frames: int, width: int, height: int
) -> None:
    records = sorted(prompts, key=lambda p: (p.frame_idx, p.track_label, p.bbox.to_record()))
    for p in records:
        if p.frame_idx >= frames:
            raise ValidationError(
                f"prompt at frame {p.frame_idx} out of range for a {frames}-frame clip"
            )
    lines = [_dumps(_header(FORMAT_PROMPTS, frames, width, height))]
    lines.extend(_dumps(p.to_record()) for p in records)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_prompts(path: str | Path) -> tuple[list[Prompt], dict]:
    path = Path(path)
    lines = _read_lines(path)
    meta = _parse_header(lines, FORMAT_PROMPTS, str(path))
    out: list[Prompt] = []
    for line_no, raw in enumerate(lines[1:], start=2):
        rec = _parse_json_line(raw, str(path), line_no)
        try:
            prm = Prompt.from_record(rec)
        except ValidationError as exc:
            raise _wrap_record_error(exc, str(path), line_no) from None
        _check_frame(prm.frame_idx, meta, str(path), line_no)
        out.append(prm)
    return out, meta


def write_masks(
    path: str | Path,
    per_frame: Sequence[Mapping[int, MaskPlane]],
    *,
    width: int,
    height: int,
) -> None:
    """Write per-(frame, label) masks; every label key present is recorded,
    empty masks included, so the file round-trips exactly."""
    lines = [_dumps(_header(FORMAT_MASKS, len(per_frame), width, height))]
    for frame_idx, labels in enumerate(per_frame):
        for label in sorted(labels):
            mask = labels[label]
            if (mask.width, mask.height) != (width, height):
                raise ValidationError(
                    f"mask at frame {frame_idx} label {label} has mismatched dimensions"
                )
            rle = rle_encode(mask)
            lines.append(
                _dumps({"frame": frame_idx, "label": label, "rle": list(rle.runs)})
            )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_masks(path: str | Path) -> tuple[list[dict[int, MaskPlane]], dict]:
    path = Path(path)
    lines = _read_lines(path)
    meta = _parse_header(lines, FORMAT_MASKS, str(path))
    per_frame: list[dict[int, MaskPlane]] = [{} for _ in range(meta["frames"])]
    for line_no, raw in enumerate(lines[1:], start=2):
        rec = _parse_json_line(raw, str(path), line_no)
        if not isinstance(rec, dict) or set(rec.keys()) != {"frame", "label", "rle"}:
            raise FormatError(
                'mask record must contain exactly the keys ["frame", "label", "rle"]',
                path=str(path),
                line=line_no,
            )
        frame, label, runs = rec["frame"], rec["label"], rec["rle"]
        if isinstance(frame, bool) or not isinstance(frame, int) or frame < 0:
            raise FormatError("frame must be a non-negative int", path=str(path), line=line_no)
        if isinstance(label, bool) or not isinstance(label, int) or label < 0:
            raise FormatError("label must be a non-negative int", path=str(path), line=line_no)
        if not isinstance(runs, list):
            raise FormatError("rle must be a list of run lengths", path=str(path), line=line_no)
        _check_frame(frame, meta, str(path), line_no)
        if label in per_frame[frame]:
            raise FormatError(
                f"duplicate mask for frame {frame} label {label}", path=str(path), line=line_no
            )
        try:
            mask = rle_decode(RleMask(meta["width"], meta["height"], tuple(runs)))
        except ValidationError as exc:
            raise _wrap_record_error(exc, str(path), line_no) from None
        per_frame[frame][label] = mask
    return per_frame, meta


def write_scenario(path: str | Path, record: Mapping) -> None:
    doc = {"format": FORMAT_SCENARIO}
    doc.update(record)
    Path(path).write_text(json.dumps(doc, indent=2, allow_nan=False) + "\n", encoding="utf-8")


def read_scenario(path: str | Path) -> dict:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid JSON ({exc.msg})", path=str(path), line=exc.lineno) from None
    if not isinstance(doc, dict):
        raise FormatError("scenario config must be a JSON object", path=str(path))
    if doc.get("format") != FORMAT_SCENARIO:
        raise FormatError(
            f"unsupported format {doc.get('format')!r}, expected {FORMAT_SCENARIO!r}",
            path=str(path),
        )
    out = dict(doc)
    out.pop("format")
    return out


# ---------------------------------------------------------------------------
# Dataset mask directories (one 8-bit graymap per frame, nonzero = anomalous)

_PGM_STEM = re.compile(r"^(\d+)$")


def write_mask_dir(directory: str | Path, masks: Sequence[MaskPlane]) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for idx, mask in enumerate(masks):
        data = (mask.bits.astype(np.uint8) * 255).tobytes()
        header = f"P5\n{mask.width} {mask.height}\n255\n".encode("ascii")
        (directory / f"{idx:06d}.pgm").write_bytes(header + data)


def _read_pgm(path: Path) -> np.ndarray:
    blob = path.read_bytes()
    tokens: list[bytes] = []
    pos = 0
    # Tokenize the header: whitespace-separated fields, # starts a comment.
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
        raise IngestError(f"{path}: not an 8-bit graymap (P2/P5)")
    try:
        width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    except ValueError:
        raise IngestError(f"{path}: malformed graymap header") from None
    if width <= 0 or height <= 0 or not (0 < maxval <= 255):
        raise IngestError(f"{path}: unsupported graymap geometry or depth")
    if tokens[0] == b"P5":
        data = blob[pos + 1 : pos + 1 + width * height]
        if len(data) != width * height:
            raise IngestError(f"{path}: truncated graymap payload")
        arr = np.frombuffer(data, dtype=np.uint8)
    else:
        try:
            values = [int(t) for t in blob[pos:].split()]
        except ValueError:
            raise IngestError(f"{path}: malformed ASCII graymap payload") from None
        if len(values) != width * height:
            raise IngestError(f"{path}: expected {width * height} samples, got {len(values)}")
        arr = np.asarray(values, dtype=np.int64)
    return arr.reshape(height, width) != 0


def ingest_dataset_masks(directory: str | Path) -> GroundTruth:
    """Load a normalized mask directory into GroundTruth.

    Layout: files 0.pgm .. N-1.pgm (any zero padding). GT track ids are
    rebuilt by linking components frame to frame at IoU >= 0.3.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise IngestError(f"{directory}: not a directory")
    by_index: dict[int, Path] = {}
    for path in sorted(directory.glob("*.pgm")):
        m = _PGM_STEM.match(path.stem)
        if m is None:
            raise IngestError(f"{path}: file name is not a frame index")
        idx = int(m.group(1))
        if idx in by_index:
            raise IngestError(f"{path}: duplicate frame index {idx} (also {by_index[idx].name})")
        by_index[idx] = path
    if not by_index:
        raise IngestError(f"{directory}: no .pgm frame files found")
    n = max(by_index) + 1
    missing = [i for i in range(n) if i not in by_index]
    if missing:
        raise IngestError(f"{directory}: missing frame file for index {missing[0]}")
    frames: list[MaskPlane] = []
    dims: tuple[int, int] | None = None
    for i in range(n):
        bits = _read_pgm(by_index[i])
        mask = MaskPlane.from_array(bits)
        if dims is None:
            dims = (mask.width, mask.height)
        elif (mask.width, mask.height) != dims:
            raise IngestError(
                f"{by_index[i]}: frame is {mask.width}x{mask.height}, expected {dims[0]}x{dims[1]}"
            )
        frames.append(mask)
    regions = link_gt_tracks([geometry.connected_components(m) for m in frames])
    return GroundTruth(frames=tuple(frames), regions=tuple(tuple(r) for r in regions))


def link_gt_tracks(per_frame: Sequence[Sequence[geometry.Region]]) -> list[list[GTRegion]]:
    """Assign gt_track_ids by greedy frame-to-frame box IoU linking."""
    next_id = 0
    prev: list[tuple[int, BBox]] = []
    out: list[list[GTRegion]] = []
    for components in per_frame:
        pairs: list[tuple[float, int, int]] = []
        for ci, comp in enumerate(components):
            for pi, (_, pbox) in enumerate(prev):
                value = geometry.iou(comp.bbox, pbox)
                if value >= GT_LINK_IOU:
                    pairs.append((value, ci, pi))
        pairs.sort(key=lambda t: (-t[0], t[1], t[2]))
        comp_to_id: dict[int, int] = {}
        used_prev: set[int] = set()
        for value, ci, pi in pairs:
            if ci in comp_to_id or pi in used_prev:
                continue
            comp_to_id[ci] = prev[pi][0]
            used_prev.add(pi)
        frame_regions: list[GTRegion] = []
        current: list[tuple[int, BBox]] = []
        for ci, comp in enumerate(components):
            if ci not in comp_to_id:
                comp_to_id[ci] = next_id
                next_id += 1
            frame_regions.append(
                GTRegion(
                    gt_track_id=comp_to_id[ci],
                    mask=comp.mask,
                    bbox=comp.bbox,
                    area=comp.area,
                )
            )
            current.append((comp_to_id[ci], comp.bbox))
        out.append(frame_regions)
        prev = current
    return out


# ---------------------------------------------------------------------------
# GroundTruth record round-trip (used by tests and the eval CLI)


def ground_truth_to_record(gt: GroundTruth) -> dict:
    return {
        "frames": gt.frame_count,
        "width": gt.width,
        "height": gt.height,
        "masks": [list(rle_encode(m).runs) for m in gt.frames],
        "regions": [
            [
                {
                    "id": r.gt_track_id,
                    "rle": list(rle_encode(r.mask).runs),
                    "box": r.bbox.to_record(),
                    "area": r.area,
                }
                for r in per_frame
            ]
            for per_frame in gt.regions
        ],
    }


def ground_truth_from_record(rec: Mapping) -> GroundTruth:
    width, height = rec["width"], rec["height"]
    frames = tuple(
        rle_decode(RleMask(width, height, tuple(runs))) for runs in rec["masks"]
    )
    regions = tuple(
        tuple(
            GTRegion(
                gt_track_id=r["id"],
                mask=rle_decode(RleMask(width, height, tuple(r["rle"]))),
                bbox=BBox.from_record(r["box"]),
                area=r["area"],
            )
            for r in per_frame
        )
        for per_frame in rec["regions"]
    )
    return GroundTruth(frames=frames, regions=regions)
