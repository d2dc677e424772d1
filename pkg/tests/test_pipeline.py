from __future__ import annotations

import random

import pytest

from taovad.errors import ValidationError
from taovad.model import BBox, Detection, PipelineParams
from taovad.pipeline import (
    FrameDetections,
    aggregate_prompts,
    group_by_frame,
    raw_prompt_scores,
    raw_prompts,
    robustness_filter,
    threshold_filter,
)
from taovad import synth

PED2 = PipelineParams.ped2()


def _det(frame: int, box: BBox, score: float = 2.0) -> Detection:
    return Detection(frame_idx=frame, bbox=box, class_label="object", anomaly_score=score)


def _stream(frame_count: int, boxes_by_frame: dict[int, list[Detection]]) -> list[FrameDetections]:
    return [
        FrameDetections(frame_idx=i, detections=tuple(boxes_by_frame.get(i, [])))
        for i in range(frame_count)
    ]


def test_threshold_filter_is_strict():
    box = BBox(0, 0, 2, 2)
    frames = _stream(1, {0: [_det(0, box, 1.5), _det(0, box, 1.5000001), _det(0, box, 0.2)]})
    kept = threshold_filter(frames, 1.5)
    assert [d.anomaly_score for d in kept[0].detections] == [1.5000001]
    assert len(kept) == 1


def test_threshold_filter_keeps_empty_frames():
    frames = _stream(3, {1: [_det(1, BBox(0, 0, 2, 2), 2.0)]})
    kept = threshold_filter(frames, 1.5)
    assert [len(fr.detections) for fr in kept] == [0, 1, 0]


def test_clip_must_start_at_frame_zero():
    frames = [FrameDetections(frame_idx=1, detections=())]
    with pytest.raises(ValidationError):
        robustness_filter(frames, PED2)


def test_clip_must_be_contiguous():
    frames = [
        FrameDetections(frame_idx=0, detections=()),
        FrameDetections(frame_idx=2, detections=()),
    ]
    with pytest.raises(ValidationError):
        robustness_filter(frames, PED2)


def test_constant_box_yields_one_label_and_interval_tuples():
    box = BBox(10, 10, 20, 20)
    frames = _stream(50, {i: [_det(i, box)] for i in range(50)})
    saved, trace = robustness_filter(frames, PED2)
    assert {t.track_label for t in saved} == {0}
    assert [t.frame_idx for t in saved] == [0, 5, 10, 15, 20, 25, 30, 35, 40, 45]
    assert all(t.bbox == box for t in saved)
    # One confirmation at frame 0, every later frame inherits.
    assert len(trace.frames[0].assigned) == 1
    assert all(not fr.assigned for fr in trace.frames[1:])
    assert all(len(fr.inherited) == 1 for fr in trace.frames[1:])


def test_confirmation_off_interval_emits_creation_tuple():
    box = BBox(4, 4, 9, 9)
    frames = _stream(20, {i: [_det(i, box)] for i in range(3, 20)})
    saved, _ = robustness_filter(frames, PED2)
    assert [t.frame_idx for t in saved] == [3, 5, 10, 15]
    assert {t.track_label for t in saved} == {0}


def test_sporadic_box_is_discarded():
    box = BBox(0, 0, 5, 5)
    frames = _stream(30, {10: [_det(10, box)], 11: [_det(11, box)]})
    saved, trace = robustness_filter(frames, PED2)
    assert saved == []
    assert len(trace.frames[10].discarded) == 1
    assert len(trace.frames[11].discarded) == 1


def test_track_too_close_to_clip_end_is_not_confirmed():
    box = BBox(0, 0, 5, 5)
    frames = _stream(3, {i: [_det(i, box)] for i in range(3)})
    saved, _ = robustness_filter(frames, PED2)
    assert saved == []


def test_gap_longer_than_window_starts_a_new_label():
    box = BBox(8, 8, 14, 14)
    present = list(range(0, 10)) + list(range(20, 36))
    frames = _stream(36, {i: [_det(i, box)] for i in present})
    saved, _ = robustness_filter(frames, PED2)
    labels_first = {t.track_label for t in saved if t.frame_idx < 10}
    labels_second = {t.track_label for t in saved if t.frame_idx >= 20}
    assert labels_first == {0}
    assert labels_second == {1}


def _labels_by_box(saved):
    by_box = {}
    for t in saved:
        by_box.setdefault(tuple(t.bbox.to_record()), set()).add(t.track_label)
    return by_box


def test_slightly_overlapping_parallel_tracks_keep_distinct_labels():
    a = BBox(0, 0, 10, 10)
    b = BBox(9, 0, 19, 10)  # IoU 10/190, below the 0.2 gate
    frames = _stream(30, {i: [_det(i, a), _det(i, b)] for i in range(30)})
    saved, _ = robustness_filter(frames, PED2)
    by_box = _labels_by_box(saved)
    assert by_box[tuple(a.to_record())] == {0}
    assert by_box[tuple(b.to_record())] == {1}


def test_heavily_overlapping_parallel_tracks_converge_after_claims_expire():
    # While the confirmation claims cover the next k frames the two boxes keep
    # their own labels; once inheritance takes over, both labels support both
    # boxes equally and the tie falls to the smaller label.
    a = BBox(0, 0, 10, 10)
    b = BBox(6, 0, 16, 10)  # IoU 40/160, above the 0.2 gate
    frames = _stream(30, {i: [_det(i, a), _det(i, b)] for i in range(30)})
    saved, _ = robustness_filter(frames, PED2)
    by_box = _labels_by_box(saved)
    assert by_box[tuple(a.to_record())] == {0}
    assert by_box[tuple(b.to_record())] == {0, 1}
    late = {t.track_label for t in saved if t.frame_idx >= 10}
    assert late == {0}


def test_inheritance_tie_breaks_to_smaller_label():
    a = BBox(0, 0, 10, 10)
    b = BBox(6, 0, 16, 10)
    c = BBox(3, 0, 13, 10)
    per_frame = {i: [_det(i, a), _det(i, b)] for i in range(30)}
    per_frame[7] = [_det(7, a), _det(7, b), _det(7, c)]
    frames = _stream(30, per_frame)
    _, trace = robustness_filter(frames, PED2)
    labels = {tuple(det.bbox.to_record()): label for det, label in trace.frames[7].inherited}
    assert labels[tuple(c.to_record())] == 0


def test_continuation_inherits_the_old_label():
    a = BBox(10, 10, 18, 18)
    frames = _stream(
        20,
        {
            **{i: [_det(i, a)] for i in range(0, 6)},
            # Same spot one frame later: picked up as the same track.
            **{i: [_det(i, a)] for i in range(6, 12)},
        },
    )
    saved, _ = robustness_filter(frames, PED2)
    assert {t.track_label for t in saved} == {0}


def test_every_thresholded_box_is_classified_once():
    for seed in range(5):
        config = synth.preset_default(seed)
        gt, frames = synth.generate(config)
        kept = threshold_filter(frames, PED2.tau)
        _, trace = robustness_filter(kept, PED2)
        for fr, tr in zip(kept, trace.frames):
            assert len(tr.inherited) + len(tr.assigned) + len(tr.discarded) == len(fr.detections)


def test_removing_sporadic_boxes_never_disturbs_persistent_tracks():
    rng = random.Random(15)
    config = synth.preset_fig3(3)
    _, frames = synth.generate(config)
    kept = threshold_filter(frames, 1.6)
    saved_full, _ = robustness_filter(kept, PipelineParams.shtech())
    clutter_spots = [
        (i, j)
        for i, fr in enumerate(kept)
        for j, det in enumerate(fr.detections)
        if det.class_label == "clutter"
    ]
    for _ in range(5):
        i, j = rng.choice(clutter_spots)
        thinner = [
            FrameDetections(
                frame_idx=fr.frame_idx,
                detections=tuple(d for jj, d in enumerate(fr.detections) if (fr.frame_idx, jj) != (i, j)),
            )
            for fr in kept
        ]
        saved_thinner, _ = robustness_filter(thinner, PipelineParams.shtech())
        assert saved_thinner == saved_full


def test_filter_is_deterministic():
    config = synth.preset_default(1)
    _, frames = synth.generate(config)
    kept = threshold_filter(frames, PED2.tau)
    first = robustness_filter(kept, PED2)
    second = robustness_filter(kept, PED2)
    assert first[0] == second[0]
    assert first[1] == second[1]


def test_label_scores_track_the_best_detection():
    box = BBox(0, 0, 5, 5)
    frames = _stream(
        12,
        {i: [_det(i, box, score=2.0 + (0.1 if i == 4 else 0.0))] for i in range(12)},
    )
    _, trace = robustness_filter(frames, PED2)
    assert trace.label_scores() == {0: pytest.approx(2.1)}


def test_aggregate_prompts_keeps_creation_and_interval_tuples():
    box = BBox(4, 4, 9, 9)
    frames = _stream(20, {i: [_det(i, box)] for i in range(3, 20)})
    saved, _ = robustness_filter(frames, PED2)
    prompts = aggregate_prompts(saved, PED2.l)
    assert [(p.frame_idx, p.track_label) for p in prompts] == [(3, 0), (5, 0), (10, 0), (15, 0)]
    assert prompts[0].center == (6.5, 6.5)


def test_aggregate_prompts_can_rethin_to_coarser_interval():
    box = BBox(4, 4, 9, 9)
    frames = _stream(20, {i: [_det(i, box)] for i in range(20)})
    saved, _ = robustness_filter(frames, PED2)
    prompts = aggregate_prompts(saved, 10)
    assert [p.frame_idx for p in prompts] == [0, 10]


def test_raw_prompts_number_labels_in_frame_order():
    a = BBox(0, 0, 4, 4)
    b = BBox(8, 8, 12, 12)
    frames = _stream(11, {0: [_det(0, a), _det(0, b)], 5: [_det(5, a)], 7: [_det(7, b)], 10: [_det(10, b)]})
    prompts = raw_prompts(frames, 5)
    assert [(p.frame_idx, p.track_label) for p in prompts] == [(0, 0), (0, 1), (5, 2), (10, 3)]
    scores = raw_prompt_scores(frames, 5)
    assert set(scores) == {0, 1, 2, 3}


def test_group_by_frame_checks_range():
    det = _det(5, BBox(0, 0, 1, 1))
    with pytest.raises(ValidationError):
        group_by_frame([det], 3)
    grouped = group_by_frame([det], 6)
    assert grouped[5].detections == (det,)
    assert all(not fr.detections for fr in grouped[:5])
