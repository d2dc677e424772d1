# Conformance tests drive the bridge from the outside, so importing the
# engine here is fine; the bridge sources themselves must never do it.
import json
import subprocess
import sys

import pytest


@pytest.fixture(scope="session")
def server_cmd() -> list[str]:
    return [sys.executable, "-m", "taovad_bridge", "serve-segmenter"]


class ScriptedSession:
    """Drive one server process line by line for malformed-input tests."""

    def __init__(self, extra_args: list[str] | None = None):
        self.proc = subprocess.Popen(
            [sys.executable, "-m", "taovad_bridge", "serve-segmenter", *(extra_args or [])],
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            text=True,
        )

    def send_raw(self, line: str):
        assert self.proc.stdin is not None
        self.proc.stdin.write(line + "\n")
        self.proc.stdin.flush()

    def send(self, msg: dict):
        self.send_raw(json.dumps(msg))

    def recv(self) -> dict:
        assert self.proc.stdout is not None
        line = self.proc.stdout.readline()
        assert line != "", "server closed stdout unexpectedly"
        return json.loads(line)

    def close_stdin(self):
        assert self.proc.stdin is not None
        self.proc.stdin.close()

    def finish(self, timeout: float = 10.0) -> int:
        try:
            self.proc.stdin and self.proc.stdin.close()
        except OSError:
            pass
        code = self.proc.wait(timeout=timeout)
        return code


@pytest.fixture
def session():
    live: list[ScriptedSession] = []

    def make(extra_args: list[str] | None = None) -> ScriptedSession:
        s = ScriptedSession(extra_args)
        live.append(s)
        return s

    yield make
    for s in live:
        s.proc.kill()
        s.proc.wait()


def valid_init(width=16, height=12, frame_count=5) -> dict:
    return {
        "type": "INIT",
        "version": "tao-seg/1",
        "width": width,
        "height": height,
        "frame_count": frame_count,
        "frames_dir": None,
    }


def prompt_record(frame: int, label: int, box: list[float]) -> dict:
    return {
        "frame": frame,
        "label": label,
        "box": box,
        "center": [(box[0] + box[2]) / 2.0, (box[1] + box[3]) / 2.0],
    }
