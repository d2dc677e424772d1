from __future__ import annotations

import json
import os
import subprocess
import sys
from pathlib import Path

import pytest

from taovad import storage, synth
from taovad.cli import load_label_scores, main, save_ground_truth
from taovad.model import MaskPlane

from conftest import hash_tree

STUB = Path(__file__).parent / "stub_backend.py"

PERFECT_REPORT = (
    "pixel_auroc=100.00\n"
    "pixel_ap=100.00\n"
    "pixel_aupro=100.00\n"
    "pixel_f1=100.00\n"
    "rbdc=100.00\n"
    "tbdc=100.00\n"
)


def run(*argv: str) -> int:
    return main(list(argv))


# synth


def test_synth_writes_the_full_artifact_set(tmp_path):
    out = tmp_path / "scene"
    assert run("synth", "--preset", "noiseless", "--out-dir", str(out)) == 0
    for name in ("manifest.json", "config.json", "gt.json", "detections.jsonl"):
        assert (out / name).exists(), name
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "synth"
    assert manifest["seeds"] == [0]
    assert set(manifest["outputs"]) == {"config", "gt", "detections"}
    config = synth.ScenarioConfig.from_record(storage.read_scenario(out / "config.json"))
    assert config == synth.preset_noiseless(0)


def test_synth_reruns_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("synth", "--preset", "default", "--seed", "4", "--out-dir", str(a)) == 0
    assert run("synth", "--preset", "default", "--seed", "4", "--out-dir", str(b)) == 0
    assert hash_tree(a) == hash_tree(b)
    assert hash_tree(a)  # non-empty


def test_synth_argument_validation(tmp_path):
    out = str(tmp_path / "x")
    assert run("synth", "--out-dir", out) == 2
    assert run("synth", "--preset", "noiseless", "--config", "c.json", "--out-dir", out) == 2
    assert run("synth", "--preset", "no-such-preset", "--out-dir", out) == 2


def test_synth_from_config_file(tmp_path):
    config = synth.ScenarioConfig(frame_count=4, width=16, height=16)
    cfg_path = tmp_path / "cfg.json"
    storage.write_scenario(cfg_path, config.to_record())
    out = tmp_path / "scene"
    assert run("synth", "--config", str(cfg_path), "--seed", "9", "--out-dir", str(out)) == 0
    stored = synth.ScenarioConfig.from_record(storage.read_scenario(out / "config.json"))
    assert stored.seed == 9


# the full chain, stage by stage


@pytest.fixture()
def noiseless_scene(tmp_path):
    out = tmp_path / "scene"
    assert run("synth", "--preset", "noiseless", "--out-dir", str(out)) == 0
    return out


def _filter(scene: Path) -> Path:
    tracks = scene / "tracks.jsonl"
    assert (
        run(
            "filter",
            "--in",
            str(scene / "detections.jsonl"),
            "--out",
            str(tracks),
            "--profile",
            "ped2",
        )
        == 0
    )
    return tracks


def test_filter_segment_eval_chain_is_perfect(noiseless_scene, tmp_path, capsys):
    tracks = _filter(noiseless_scene)
    trace = Path(str(tracks) + ".trace.json")
    assert trace.exists()
    # Canonical detection files sort each frame by ascending score, so the
    # 2.0-scored object is confirmed first and takes label 0.
    assert load_label_scores(trace) == {0: 2.0, 1: 2.2}

    masks = tmp_path / "masks.jsonl"
    prompts = tmp_path / "prompts.jsonl"
    assert (
        run(
            "segment",
            "--tracks",
            str(tracks),
            "--out",
            str(masks),
            "--backend",
            "oracle",
            "--gt",
            str(noiseless_scene / "gt.json"),
            "--prompts",
            str(prompts),
            "--profile",
            "ped2",
        )
        == 0
    )
    assert storage.peek_format(masks) == storage.FORMAT_MASKS
    assert storage.peek_format(prompts) == storage.FORMAT_PROMPTS

    report = tmp_path / "report.txt"
    assert (
        run(
            "eval",
            "--pred",
            str(masks),
            "--gt",
            str(noiseless_scene / "gt.json"),
            "--label-scores",
            str(trace),
            "--out",
            str(report),
        )
        == 0
    )
    assert report.read_text() == PERFECT_REPORT
    assert capsys.readouterr().out.endswith(PERFECT_REPORT)


def test_eval_accepts_track_files_directly(noiseless_scene, tmp_path):
    tracks = _filter(noiseless_scene)
    report = tmp_path / "report.txt"
    assert (
        run(
            "eval",
            "--pred",
            str(tracks),
            "--gt",
            str(noiseless_scene / "gt.json"),
            "--out",
            str(report),
        )
        == 0
    )
    text = report.read_text()
    # Interval-thinned boxes cover only a subset of frames, so the scores
    # are partial; this test only cares that track files evaluate at all.
    assert text.count("\n") == 6
    assert "pixel_auroc=" in text


def test_eval_on_pgm_directory_ground_truth(noiseless_scene, tmp_path):
    gt_dir = tmp_path / "gtdir"
    from taovad.cli import load_ground_truth

    gt = load_ground_truth(noiseless_scene / "gt.json")
    storage.write_mask_dir(gt_dir, list(gt.frames))
    masks = tmp_path / "masks.jsonl"
    tracks = _filter(noiseless_scene)
    assert (
        run(
            "segment",
            "--tracks",
            str(tracks),
            "--out",
            str(masks),
            "--backend",
            "oracle",
            "--gt",
            str(noiseless_scene / "gt.json"),
            "--profile",
            "ped2",
        )
        == 0
    )
    report = tmp_path / "report.txt"
    assert run("eval", "--pred", str(masks), "--gt", str(gt_dir), "--out", str(report)) == 0
    assert report.read_text() == PERFECT_REPORT


def test_eval_exit_five_when_all_metrics_undefined(tmp_path):
    empty = MaskPlane.empty(8, 8)
    from taovad.model import GroundTruth

    gt = GroundTruth((empty, empty), ((), ()))
    gt_path = tmp_path / "gt.json"
    save_ground_truth(gt_path, gt)
    masks_path = tmp_path / "masks.jsonl"
    storage.write_masks(masks_path, [{}, {}], width=8, height=8)
    report = tmp_path / "report.txt"
    assert run("eval", "--pred", str(masks_path), "--gt", str(gt_path), "--out", str(report)) == 5
    # The report and its manifest still land on disk for post-mortems.
    assert report.read_text().count("undefined") == 6
    assert Path(str(report) + ".manifest.json").exists()


def test_eval_missing_inputs_exit_three(tmp_path):
    missing = str(tmp_path / "nope.jsonl")
    assert run("eval", "--pred", missing, "--gt", missing) == 3


def test_eval_rejects_mismatched_geometry(noiseless_scene, tmp_path):
    masks_path = tmp_path / "masks.jsonl"
    storage.write_masks(masks_path, [{} for _ in range(3)], width=8, height=8)
    assert run("eval", "--pred", str(masks_path), "--gt", str(noiseless_scene / "gt.json")) == 2


def test_eval_dump_curves(noiseless_scene, tmp_path):
    tracks = _filter(noiseless_scene)
    curves = tmp_path / "curves.csv"
    assert (
        run(
            "eval",
            "--pred",
            str(tracks),
            "--gt",
            str(noiseless_scene / "gt.json"),
            "--mode",
            "curve",
            "--dump-curves",
            str(curves),
        )
        == 0
    )
    lines = curves.read_text().splitlines()
    assert lines[0] == "metric,threshold,x,y"
    kinds = {line.split(",", 1)[0] for line in lines[1:]}
    assert {"pixel_aupro", "rbdc", "tbdc"} <= kinds


# segment backends through the CLI


def test_segment_external_stub(noiseless_scene, tmp_path, monkeypatch):
    monkeypatch.delenv("STUB_MODE", raising=False)
    tracks = _filter(noiseless_scene)
    masks = tmp_path / "masks.jsonl"
    backend = f"external:{sys.executable} {STUB}"
    assert (
        run(
            "segment",
            "--tracks",
            str(tracks),
            "--out",
            str(masks),
            "--backend",
            backend,
            "--profile",
            "ped2",
        )
        == 0
    )
    per_frame, meta = storage.read_masks(masks)
    assert meta["frames"] == 60
    assert any(frame for frame in per_frame)


def test_segment_external_garbage_exit_four(noiseless_scene, tmp_path):
    tracks = _filter(noiseless_scene)
    masks = tmp_path / "masks.jsonl"
    backend = f"external:{sys.executable} -c print('junk')"
    assert (
        run("segment", "--tracks", str(tracks), "--out", str(masks), "--backend", backend, "--profile", "ped2")
        == 4
    )


def test_segment_no_track_needs_ground_truth(noiseless_scene, tmp_path):
    tracks = _filter(noiseless_scene)
    masks = tmp_path / "masks.jsonl"
    assert (
        run("segment", "--tracks", str(tracks), "--out", str(masks), "--no-track", "--profile", "ped2")
        == 2
    )


def test_segment_unknown_backend(noiseless_scene, tmp_path):
    tracks = _filter(noiseless_scene)
    assert (
        run(
            "segment",
            "--tracks",
            str(tracks),
            "--out",
            str(tmp_path / "m.jsonl"),
            "--backend",
            "psychic",
            "--profile",
            "ped2",
        )
        == 2
    )


# pipeline


def test_pipeline_noiseless_oracle_is_perfect(tmp_path, capsys):
    out = tmp_path / "run"
    assert (
        run(
            "pipeline",
            "--preset",
            "noiseless",
            "--out-dir",
            str(out),
            "--backend",
            "oracle",
            "--profile",
            "ped2",
        )
        == 0
    )
    assert (out / "report.txt").read_text() == PERFECT_REPORT
    for name in (
        "manifest.json",
        "config.json",
        "gt.json",
        "detections.jsonl",
        "tracks.jsonl",
        "trace.json",
        "masks.jsonl",
        "report.json",
    ):
        assert (out / name).exists(), name
    record = json.loads((out / "report.json").read_text())
    assert record["pixel_f1"] == 1.0
    capsys.readouterr()


def test_pipeline_reruns_byte_identical(tmp_path, capsys):
    args = ("pipeline", "--preset", "fig3", "--seed", "3", "--profile", "shtech")
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(*args, "--out-dir", str(a)) == 0
    assert run(*args, "--out-dir", str(b)) == 0
    assert hash_tree(a) == hash_tree(b)
    capsys.readouterr()


def test_pipeline_unfiltered_variant_writes_no_tracks(tmp_path, capsys):
    out = tmp_path / "run"
    assert (
        run(
            "pipeline",
            "--preset",
            "noiseless",
            "--out-dir",
            str(out),
            "--backend",
            "oracle",
            "--profile",
            "ped2",
            "--no-filter",
        )
        == 0
    )
    assert not (out / "tracks.jsonl").exists()
    assert not (out / "trace.json").exists()
    assert (out / "masks.jsonl").exists()
    capsys.readouterr()


def test_pipeline_bad_params_exit_two(tmp_path):
    out = str(tmp_path / "run")
    assert run("pipeline", "--preset", "noiseless", "--out-dir", out, "--params", "tau=abc") == 2
    assert run("pipeline", "--preset", "noiseless", "--out-dir", out, "--params", "zeta=3") == 2
    assert run("pipeline", "--out-dir", out) == 2


# ablate


def test_ablate_writes_table_and_json(tmp_path, capsys):
    out = tmp_path / "grid"
    assert (
        run(
            "ablate",
            "--preset",
            "fig3",
            "--seeds",
            "0:2",
            "--profile",
            "shtech",
            "--out-dir",
            str(out),
        )
        == 0
    )
    table = (out / "table.txt").read_text()
    lines = table.splitlines()
    assert lines[0].split() == ["track", "filter", "pixel_f1", "rbdc", "tbdc"]
    assert len(lines) == 5
    doc = json.loads((out / "table.json").read_text())
    assert doc["seeds"] == [0, 1]
    assert [(row["tracked"], row["filtered"]) for row in doc["rows"]] == [
        (True, True),
        (True, False),
        (False, True),
        (False, False),
    ]
    capsys.readouterr()


def test_ablate_bad_seed_spec(tmp_path):
    out = str(tmp_path / "grid")
    assert run("ablate", "--seeds", "5:5", "--out-dir", out) == 2
    assert run("ablate", "--seeds", "a,b", "--out-dir", out) == 2


# process-level entry points


def test_module_entry_point(tmp_path):
    out = tmp_path / "scene"
    proc = subprocess.run(
        [sys.executable, "-m", "taovad", "synth", "--preset", "noiseless", "--out-dir", str(out)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert (out / "detections.jsonl").exists()


def test_console_script_and_logging(tmp_path):
    out = tmp_path / "scene"
    env = dict(os.environ, TAO_LOG="INFO")
    proc = subprocess.run(
        ["taovad", "synth", "--preset", "noiseless", "--out-dir", str(out)],
        capture_output=True,
        text=True,
        env=env,
    )
    assert proc.returncode == 0, proc.stderr
    assert "synth: 60 frames" in proc.stderr
