"""tao-seg/1 server: one session per process over stdin/stdout.

The host speaks first (INIT), we answer ACK, it sends one SEGMENT with the
whole prompt set, we stream RESULT lines and finish with END. Anything
malformed on the way in gets an ERROR line and a nonzero exit; after END the
process exits, no second session.

A segmenter is a callable (width, height, frame_count, prompts, frames_dir,
device) yielding (frame, label, mask_bits) triples. The stub echoes each
prompt box as a filled rectangle on the prompt's own frame; real promptable
video segmenters register in SEGMENTERS and may read decoded frames from
frames_dir.
"""

from __future__ import annotations

import json
import math
import sys
from typing import Callable, Iterable, TextIO

from . import formats
from .errors import ConfigError

EXIT_OK = 0
EXIT_PROTOCOL = 4


def stub_segmenter(width, height, frame_count, prompts, frames_dir, device):
    for p in prompts:
        yield p["frame"], p["label"], formats.rect_bits(width, height, p["box"])


SEGMENTERS: dict[str, Callable[..., Iterable]] = {"stub": stub_segmenter}


class _SessionError(Exception):
    pass


def _fail(reason: str) -> _SessionError:
    return _SessionError(reason)


def _read_message(stdin: TextIO) -> dict:
    line = stdin.readline()
    if line == "":
        raise _fail("input closed before the session finished")
    try:
        msg = json.loads(line)
    except json.JSONDecodeError as exc:
        raise _fail(f"not valid JSON: {exc.msg}") from None
    if not isinstance(msg, dict) or not isinstance(msg.get("type"), str):
        raise _fail("message must be an object with a string 'type'")
    return msg


def _require_int(msg: dict, key: str, minimum: int) -> int:
    value = msg.get(key)
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise _fail(f"{key} must be an int >= {minimum}, got {value!r}")
    return value


def _check_prompt(rec, frame_count: int) -> dict:
    if not isinstance(rec, dict) or set(rec.keys()) != {"frame", "label", "box", "center"}:
        raise _fail(f"malformed prompt record: {rec!r}")
    frame = rec["frame"]
    if isinstance(frame, bool) or not isinstance(frame, int) or not (0 <= frame < frame_count):
        raise _fail(f"prompt frame out of range: {frame!r}")
    label = rec["label"]
    if isinstance(label, bool) or not isinstance(label, int) or label < 0:
        raise _fail(f"prompt label invalid: {label!r}")
    box = rec["box"]
    if (
        not isinstance(box, list)
        or len(box) != 4
        or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in box)
        or any(not math.isfinite(v) for v in box)
        or not (box[0] < box[2] and box[1] < box[3])
    ):
        raise _fail(f"prompt box invalid: {box!r}")
    center = rec["center"]
    if (
        not isinstance(center, list)
        or len(center) != 2
        or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in center)
    ):
        raise _fail(f"prompt center invalid: {center!r}")
    return rec


def _emit(stdout: TextIO, msg: dict) -> None:
    stdout.write(formats.json_line(msg) + "\n")
    stdout.flush()


def serve(
    segmenter: str = "stub",
    *,
    device: str = "cpu",
    stdin: TextIO | None = None,
    stdout: TextIO | None = None,
) -> int:
    if segmenter not in SEGMENTERS:
        raise ConfigError(
            f"unknown segmenter spec {segmenter!r}; built in: {sorted(SEGMENTERS)} "
            "(real adapters must register in taovad_bridge.serve.SEGMENTERS)"
        )
    run = SEGMENTERS[segmenter]
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    try:
        init = _read_message(stdin)
        if init["type"] != "INIT":
            raise _fail(f"expected INIT, got {init['type']!r}")
        if init.get("version") != formats.PROTOCOL_VERSION:
            raise _fail(
                f"unsupported protocol version {init.get('version')!r}, "
                f"this backend speaks {formats.PROTOCOL_VERSION!r}"
            )
        width = _require_int(init, "width", 1)
        height = _require_int(init, "height", 1)
        frame_count = _require_int(init, "frame_count", 1)
        frames_dir = init.get("frames_dir")
        if frames_dir is not None and not isinstance(frames_dir, str):
            raise _fail(f"frames_dir must be a string or null, got {frames_dir!r}")

        _emit(stdout, {"type": "ACK", "version": formats.PROTOCOL_VERSION})

        segment = _read_message(stdin)
        if segment["type"] != "SEGMENT":
            raise _fail(f"expected SEGMENT, got {segment['type']!r}")
        if set(segment.keys()) != {"type", "prompts"} or not isinstance(
            segment["prompts"], list
        ):
            raise _fail("SEGMENT must carry exactly a 'prompts' list")
        prompts = [_check_prompt(rec, frame_count) for rec in segment["prompts"]]
        seen = set()
        for p in prompts:
            key = (p["frame"], p["label"])
            if key in seen:
                raise _fail(f"duplicate prompt for frame {key[0]} label {key[1]}")
            seen.add(key)

        emitted = set()
        results = run(width, height, frame_count, prompts, frames_dir, device)
        for frame, label, bits in sorted(results, key=lambda r: (r[0], r[1])):
            if (frame, label) in emitted:
                raise _fail(f"segmenter produced frame {frame} label {label} twice")
            emitted.add((frame, label))
            _emit(
                stdout,
                {"type": "RESULT", "frame": frame, "label": label, "rle": formats.rle_runs(bits)},
            )
        _emit(stdout, {"type": "END"})
        return EXIT_OK
    except _SessionError as exc:
        _emit(stdout, {"type": "ERROR", "message": str(exc)})
        return EXIT_PROTOCOL
