from __future__ import annotations

import numpy as np
import pytest

from taovad.errors import ValidationError
from taovad.model import (
    BBox,
    Detection,
    GroundTruth,
    GTRegion,
    MaskPlane,
    PipelineParams,
    PROFILES,
    Prompt,
    ScoreMap,
    TrackedBox,
)

from conftest import mask_from_rows


def test_bbox_geometry_accessors():
    box = BBox(1.0, 2.0, 4.0, 8.0)
    assert box.width == 3.0
    assert box.height == 6.0
    assert box.area == 18.0


@pytest.mark.parametrize(
    "coords",
    [
        (2.0, 0.0, 1.0, 3.0),  # x2 <= x1
        (0.0, 3.0, 1.0, 3.0),  # zero height
        (-1.0, 0.0, 1.0, 1.0),  # negative corner
        (0.0, 0.0, float("inf"), 1.0),
        (0.0, float("nan"), 1.0, 1.0),
    ],
)
def test_bbox_rejects_degenerate(coords):
    with pytest.raises(ValidationError):
        BBox(*coords)


def test_bbox_record_round_trip():
    box = BBox(0.5, 1.25, 3.75, 9.0)
    assert BBox.from_record(box.to_record()) == box
    with pytest.raises(ValidationError):
        BBox.from_record([1.0, 2.0, 3.0])
    with pytest.raises(ValidationError):
        BBox.from_record([1.0, 2.0, 3.0, "four"])


def test_detection_record_round_trip_and_strictness():
    det = Detection(frame_idx=3, bbox=BBox(0, 0, 2, 2), class_label="object", anomaly_score=1.5)
    rec = det.to_record()
    assert rec == {"frame": 3, "box": [0.0, 0.0, 2.0, 2.0], "label": "object", "score": 1.5}
    assert Detection.from_record(rec) == det
    with pytest.raises(ValidationError):
        Detection.from_record({**rec, "extra": 1})
    missing = dict(rec)
    missing.pop("score")
    with pytest.raises(ValidationError):
        Detection.from_record(missing)
    with pytest.raises(ValidationError):
        Detection.from_record({**rec, "frame": True})  # bool is not an index


def test_tracked_box_and_prompt_round_trip():
    trk = TrackedBox(frame_idx=5, bbox=BBox(1, 1, 3, 4), track_label=2)
    assert TrackedBox.from_record(trk.to_record()) == trk
    prm = Prompt.for_tracked(trk)
    assert prm.center == (2.0, 2.5)
    assert Prompt.from_record(prm.to_record()) == prm


def test_prompt_center_must_sit_inside_box():
    with pytest.raises(ValidationError):
        Prompt(frame_idx=0, bbox=BBox(0, 0, 2, 2), center=(5.0, 1.0), track_label=0)
    with pytest.raises(ValidationError):
        Prompt(frame_idx=0, bbox=BBox(0, 0, 2, 2), center=(2.0, 1.0), track_label=0)


def test_mask_plane_is_immutable_and_set_like():
    mask = mask_from_rows(["X.", ".X"])
    with pytest.raises(ValueError):
        mask.bits[0, 0] = False
    other = mask_from_rows(["XX", ".."])
    assert mask.union(other).count == 3
    assert mask.intersect(other).count == 1
    assert mask.union(other).covers(mask)
    assert not mask.covers(other)
    assert MaskPlane.empty(2, 2).is_empty
    assert MaskPlane.full(2, 2).count == 4


def test_mask_plane_equality_is_by_content():
    a = mask_from_rows(["X.", ".X"])
    b = mask_from_rows(["X.", ".X"])
    c = mask_from_rows(["X.", "XX"])
    assert a == b
    assert a != c
    assert a != MaskPlane.empty(3, 2)


def test_mask_plane_rejects_wrong_shape():
    with pytest.raises(ValidationError):
        MaskPlane(3, 2, np.zeros((3, 3), dtype=bool))


def test_score_map_validation_and_round_trip():
    values = np.array([[0.0, 0.5], [1.0, 2.0]])
    smap = ScoreMap(2, 2, values)
    assert ScoreMap.from_record(smap.to_record()) == smap
    with pytest.raises(ValidationError):
        ScoreMap(2, 2, np.array([[0.0, np.nan], [0.0, 0.0]]))
    mask = mask_from_rows(["X.", ".X"])
    assert ScoreMap.from_mask(mask).values[0, 0] == 1.0
    assert ScoreMap.from_mask(mask).values[0, 1] == 0.0


def test_pipeline_params_profiles():
    assert PipelineParams.ped2() == PipelineParams(tau=1.5, k=5, h=0.2, m=3, l=5)
    assert PipelineParams.shtech() == PipelineParams(tau=1.6, k=5, h=0.2, m=3, l=15)
    assert set(PROFILES) == {"ped2", "shtech"}
    assert PROFILES["ped2"] == PipelineParams.ped2()


@pytest.mark.parametrize(
    "kwargs",
    [
        {"k": 0},
        {"m": 0},
        {"m": 6, "k": 5},
        {"h": 0.0},
        {"h": 1.0},
        {"l": 0},
        {"tau": float("nan")},
    ],
)
def test_pipeline_params_invariants(kwargs):
    with pytest.raises(ValidationError):
        PipelineParams(**kwargs)


def test_pipeline_params_record_round_trip():
    params = PipelineParams(tau=1.7, k=4, h=0.3, m=2, l=7)
    assert PipelineParams.from_record(params.to_record()) == params


def _region(mask: MaskPlane, track_id: int) -> GTRegion:
    from taovad.geometry import mask_to_bbox

    bbox = mask_to_bbox(mask)
    assert bbox is not None
    return GTRegion(gt_track_id=track_id, mask=mask, bbox=bbox, area=mask.count)


def test_ground_truth_region_containment():
    frame = mask_from_rows(["XX..", "XX..", "...."])
    inside = mask_from_rows(["XX..", "XX..", "...."])
    outside = mask_from_rows(["..X.", "....", "...."])
    GroundTruth(frames=(frame,), regions=((_region(inside, 0),),))
    with pytest.raises(ValidationError):
        GroundTruth(frames=(frame,), regions=((_region(outside, 0),),))


def test_ground_truth_rejects_duplicate_track_ids_in_frame():
    frame = mask_from_rows(["X.X"])
    a = mask_from_rows(["X.."])
    b = mask_from_rows(["..X"])
    with pytest.raises(ValidationError):
        GroundTruth(frames=(frame,), regions=((_region(a, 1), _region(b, 1)),))


def test_ground_truth_lookup_helpers():
    f0 = mask_from_rows(["XX..", "...."])
    f1 = mask_from_rows(["....", "..XX"])
    gt = GroundTruth(
        frames=(f0, f1),
        regions=((_region(f0, 0),), (_region(f1, 1),)),
    )
    assert gt.track_ids == (0, 1)
    assert gt.region_of(0, 0) is not None
    assert gt.region_of(0, 1) is None
    assert gt.track_frames(1) == (1,)
