"""Loopback segmentation backend for the subprocess protocol tests.

Speaks line-delimited tao-seg/1 on stdin/stdout and echoes every prompt back
as a filled rectangle on the prompt's own frame. The STUB_MODE environment
variable selects deliberately broken variants so the engine's failure paths
can be exercised:

    ok            well-formed session (default)
    wrong-version ACK carries an unknown protocol version
    bad-ack       ACK carries an extra key
    early-exit    exits right after the handshake, no END
    garbage       emits a non-JSON line instead of results
    error         reports an ERROR message
    bad-rle       RESULT runs do not sum to the frame area
    bad-frame     RESULT frame index out of range
    dup           sends each RESULT twice
    foreign-label RESULT labels never mentioned by any prompt
    end-extra     END carries an extra key

Deliberately free of third-party imports so it starts fast; the run-length
encoding is the same alternating zeros-first scheme the engine reads.
"""

import json
import math
import os
import sys


def _send(obj):
    sys.stdout.write(json.dumps(obj, separators=(",", ":")) + "\n")
    sys.stdout.flush()


def _recv():
    line = sys.stdin.readline()
    if line == "":
        sys.exit(1)
    return json.loads(line)


def _rect_bits(box, width, height):
    x1 = max(0, math.floor(box[0]))
    y1 = max(0, math.floor(box[1]))
    x2 = min(width, math.ceil(box[2]))
    y2 = min(height, math.ceil(box[3]))
    for y in range(height):
        for x in range(width):
            yield 1 if (y1 <= y < y2 and x1 <= x < x2) else 0


def _encode(bits):
    runs = []
    value = 0
    count = 0
    for bit in bits:
        if bit == value:
            count += 1
        else:
            runs.append(count)
            value = 1 - value
            count = 1
    runs.append(count)
    return runs


def main():
    mode = os.environ.get("STUB_MODE", "ok")
    init = _recv()
    if init.get("type") != "INIT":
        _send({"type": "ERROR", "message": f"expected INIT, got {init.get('type')!r}"})
        return 1
    width = init["width"]
    height = init["height"]
    frame_count = init["frame_count"]

    if mode == "wrong-version":
        _send({"type": "ACK", "version": "tao-seg/0"})
    elif mode == "bad-ack":
        _send({"type": "ACK", "version": "tao-seg/1", "mood": "cheerful"})
    else:
        _send({"type": "ACK", "version": "tao-seg/1"})
    if mode == "early-exit":
        return 0

    seg = _recv()
    prompts = seg.get("prompts", [])

    if mode == "garbage":
        sys.stdout.write("this is not json\n")
        sys.stdout.flush()
        return 0
    if mode == "error":
        _send({"type": "ERROR", "message": "synthetic failure"})
        return 0

    for p in prompts:
        runs = _encode(_rect_bits(p["box"], width, height))
        if mode == "bad-rle":
            runs = [width * height + 1]
        frame = frame_count if mode == "bad-frame" else p["frame"]
        label = p["label"] + 9000 if mode == "foreign-label" else p["label"]
        msg = {"type": "RESULT", "frame": frame, "label": label, "rle": runs}
        _send(msg)
        if mode == "dup":
            _send(msg)

    if mode == "end-extra":
        _send({"type": "END", "status": "done"})
    else:
        _send({"type": "END"})
    return 0


if __name__ == "__main__":
    sys.exit(main())
