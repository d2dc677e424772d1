"""taovad: track-anything-style anomaly pipeline at desk scale.

The package splits into the box pipeline (threshold + temporal-voting
filter + prompt aggregation), a pluggable promptable-segmenter interface
with reference backends, the dual-level (pixel + region/track) benchmark,
a seeded scenario generator, bit-exact file formats, and a CLI tying them
together.
"""

from .errors import (
    FormatError,
    IngestError,
    ProtocolError,
    TaovadError,
    UndefinedMetricError,
    ValidationError,
)
from .geometry import Region, connected_components, enclosing_box, iou, mask_to_bbox, merge_overlapping
from .metrics import (
    DetectedRegion,
    MetricsReport,
    ObjectEvalInput,
    PixelEvalInput,
    binarize,
    evaluate_segmentation,
    per_frame_f1,
    pixel_ap,
    pixel_auroc,
    pixel_aupro,
    pixel_f1,
    rbdc,
    regions_from_masks,
    tbdc,
)
from .model import (
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
from .pipeline import (
    FilterTrace,
    FrameDetections,
    FrameTrace,
    aggregate_prompts,
    group_by_frame,
    raw_prompt_scores,
    raw_prompts,
    robustness_filter,
    threshold_filter,
)
from .segmenter import (
    DriftBackend,
    DriftParams,
    ExternalBackend,
    OracleBackend,
    SegmentationRequest,
    SegmentationResult,
    bind_prompt,
    rect_mask,
    segment,
    segment_frame_isolated,
)
from .synth import (
    FalsePositiveConfig,
    NoiseConfig,
    ObjectSpec,
    PRESETS,
    ScenarioConfig,
    generate,
)

__version__ = "0.1.0"

__all__ = [
    "BBox",
    "Detection",
    "DetectedRegion",
    "DriftBackend",
    "DriftParams",
    "ExternalBackend",
    "FalsePositiveConfig",
    "FilterTrace",
    "FormatError",
    "FrameDetections",
    "FrameTrace",
    "GTRegion",
    "GroundTruth",
    "IngestError",
    "MaskPlane",
    "MetricsReport",
    "NoiseConfig",
    "ObjectEvalInput",
    "ObjectSpec",
    "OracleBackend",
    "PRESETS",
    "PROFILES",
    "PipelineParams",
    "PixelEvalInput",
    "Prompt",
    "ProtocolError",
    "Region",
    "ScenarioConfig",
    "ScoreMap",
    "SegmentationRequest",
    "SegmentationResult",
    "TaovadError",
    "TrackedBox",
    "UndefinedMetricError",
    "ValidationError",
    "aggregate_prompts",
    "binarize",
    "bind_prompt",
    "connected_components",
    "enclosing_box",
    "evaluate_segmentation",
    "generate",
    "group_by_frame",
    "iou",
    "mask_to_bbox",
    "merge_overlapping",
    "per_frame_f1",
    "pixel_ap",
    "pixel_auroc",
    "pixel_aupro",
    "pixel_f1",
    "raw_prompt_scores",
    "raw_prompts",
    "rbdc",
    "rect_mask",
    "regions_from_masks",
    "robustness_filter",
    "segment",
    "segment_frame_isolated",
    "tbdc",
    "threshold_filter",
]
