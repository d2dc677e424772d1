"""tao-seg/1 server conformance: engine loopback plus malformed sessions."""

import json

import numpy as np
import pytest

from conftest import prompt_record, valid_init

from taovad.model import BBox, Prompt, TrackedBox
from taovad.segmenter import ExternalBackend, SegmentationRequest, rect_mask
from taovad.errors import ProtocolError


def _prompts():
    return (
        Prompt.for_tracked(TrackedBox(0, BBox(2.4, 3.0, 8.6, 9.0), 0)),
        Prompt.for_tracked(TrackedBox(0, BBox(10.0, 1.0, 14.0, 5.0), 1)),
        Prompt.for_tracked(TrackedBox(3, BBox(0.0, 0.0, 4.0, 4.0), 1)),
    )


def test_engine_loopback_masks_are_bit_exact(server_cmd):
    backend = ExternalBackend(server_cmd)
    request = SegmentationRequest(5, 16, 12, _prompts())
    result = backend.segment(request)
    for p in request.prompts:
        got = result.mask_at(p.frame_idx, p.track_label)
        assert got is not None
        assert got == rect_mask(p.bbox, 16, 12)
    # the stub answers only on prompt frames
    for frame in range(5):
        labels = set(result.masks[frame].keys())
        want = {p.track_label for p in request.prompts if p.frame_idx == frame}
        assert labels == want


def test_engine_loopback_with_no_prompts(server_cmd):
    backend = ExternalBackend(server_cmd)
    result = backend.segment(SegmentationRequest(3, 8, 8, ()))
    assert all(not frame for frame in result.masks)


def test_session_transcript_is_ordered_and_exact(session):
    s = session()
    s.send(valid_init())
    assert s.recv() == {"type": "ACK", "version": "tao-seg/1"}
    s.send(
        {
            "type": "SEGMENT",
            "prompts": [
                prompt_record(3, 1, [0.0, 0.0, 4.0, 4.0]),
                prompt_record(0, 1, [10.0, 1.0, 14.0, 5.0]),
                prompt_record(0, 0, [2.0, 3.0, 8.0, 9.0]),
            ],
        }
    )
    first = s.recv()
    second = s.recv()
    third = s.recv()
    assert [(m["frame"], m["label"]) for m in (first, second, third)] == [
        (0, 0),
        (0, 1),
        (3, 1),
    ]
    assert set(first.keys()) == {"type", "frame", "label", "rle"}
    assert sum(first["rle"]) == 16 * 12
    assert s.recv() == {"type": "END"}
    assert s.finish() == 0


def test_unsupported_version_gets_error(session):
    s = session()
    s.send({**valid_init(), "version": "tao-seg/2"})
    msg = s.recv()
    assert msg["type"] == "ERROR"
    assert "version" in msg["message"]
    assert s.finish() == 4


@pytest.mark.parametrize(
    "first_line",
    [
        "this is not json",
        json.dumps(["INIT"]),
        json.dumps({"no_type": 1}),
        json.dumps({"type": "SEGMENT", "prompts": []}),
        json.dumps({**valid_init(), "width": 0}),
        json.dumps({**valid_init(), "frame_count": "five"}),
    ],
)
def test_malformed_init_gets_error(session, first_line):
    s = session()
    s.send_raw(first_line)
    assert s.recv()["type"] == "ERROR"
    assert s.finish() == 4


@pytest.mark.parametrize(
    "segment_line",
    [
        "garbage {",
        json.dumps({"type": "SEGMENT"}),
        json.dumps({"type": "SEGMENT", "prompts": {}}),
        json.dumps({"type": "SEGMENT", "prompts": [], "extra": 1}),
        json.dumps({"type": "INIT", "prompts": []}),
        json.dumps({"type": "SEGMENT", "prompts": [{"frame": 0}]}),
        json.dumps(
            {"type": "SEGMENT", "prompts": [prompt_record(99, 0, [0.0, 0.0, 1.0, 1.0])]}
        ),
        json.dumps(
            {"type": "SEGMENT", "prompts": [prompt_record(0, -1, [0.0, 0.0, 1.0, 1.0])]}
        ),
        json.dumps(
            {"type": "SEGMENT", "prompts": [prompt_record(0, 0, [4.0, 0.0, 1.0, 1.0])]}
        ),
        json.dumps(
            {
                "type": "SEGMENT",
                "prompts": [
                    prompt_record(0, 0, [0.0, 0.0, 1.0, 1.0]),
                    prompt_record(0, 0, [2.0, 2.0, 3.0, 3.0]),
                ],
            }
        ),
    ],
)
def test_malformed_segment_gets_error(session, segment_line):
    s = session()
    s.send(valid_init())
    assert s.recv()["type"] == "ACK"
    s.send_raw(segment_line)
    msg = s.recv()
    assert msg["type"] == "ERROR"
    assert s.finish() == 4


def test_eof_after_handshake_gets_error(session):
    s = session()
    s.send(valid_init())
    assert s.recv()["type"] == "ACK"
    s.close_stdin()
    msg = s.recv()
    assert msg["type"] == "ERROR"
    assert "closed" in msg["message"]
    assert s.proc.wait(timeout=10) == 4


def test_unknown_segmenter_spec_fails_before_handshake(session):
    s = session(["--segmenter", "sam9"])
    code = s.finish()
    assert code == 2
    assert "unknown segmenter" in s.proc.stderr.read()


def test_engine_raises_protocol_error_when_server_errors(server_cmd):
    # a server that dies before the handshake must surface engine-side as a
    # ProtocolError, not a hang or a silent empty result
    backend = ExternalBackend([*server_cmd, "--segmenter", "sam9"])
    with pytest.raises(ProtocolError):
        backend.segment(SegmentationRequest(3, 8, 8, ()))


def test_masks_clip_to_frame(session):
    s = session()
    s.send(valid_init(width=4, height=4, frame_count=1))
    assert s.recv()["type"] == "ACK"
    s.send({"type": "SEGMENT", "prompts": [prompt_record(0, 0, [2.5, 2.5, 9.0, 9.0])]})
    result = s.recv()
    assert result["type"] == "RESULT"
    bits = np.zeros(16, dtype=bool)
    pos = 0
    value = False
    for run in result["rle"]:
        bits[pos : pos + run] = value
        pos += run
        value = not value
    grid = bits.reshape(4, 4)
    assert grid[2:4, 2:4].all() and grid.sum() == 4
    assert s.recv() == {"type": "END"}
    assert s.finish() == 0
