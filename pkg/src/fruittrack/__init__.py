"""Multi-view 3D fruit localisation, tracking, counting and evaluation."""

from .geometry import (
    BBox2D,
    Pose,
    SphereFit,
    bbox_iou,
    fit_sphere,
    mahalanobis_sq,
    project_sphere,
    transform_gaussian,
)
from .metrics import (
    EvalReport,
    SequenceData,
    TrackedBox,
    cumulative_report,
    detection_pr,
    hota,
    hota_alpha,
    mape,
    match_frames,
    mpe,
)
from .perception import (
    Detection,
    PerceptionConfig,
    PreprocStats,
    RawDetection2D,
    extract_detections,
    stats_report,
    workspace_filter,
)
from .simulator import Frame, Fruit, ScenarioConfig, camera_path, generate_scene, render_frame, simulate_sequence
from .worldmodel import (
    Association,
    Track,
    TrackerConfig,
    WorldModel,
    build_cost_matrix,
    count,
    kalman_update,
    lifecycle,
    predict,
    solve_assignment,
    step,
)

__version__ = "0.1.0"

__all__ = [
    "BBox2D",
    "Pose",
    "SphereFit",
    "bbox_iou",
    "fit_sphere",
    "mahalanobis_sq",
    "project_sphere",
    "transform_gaussian",
    "Detection",
    "PerceptionConfig",
    "PreprocStats",
    "RawDetection2D",
    "extract_detections",
    "stats_report",
    "workspace_filter",
    "Association",
    "Track",
    "TrackerConfig",
    "WorldModel",
    "build_cost_matrix",
    "count",
    "kalman_update",
    "lifecycle",
    "predict",
    "solve_assignment",
    "step",
    "EvalReport",
    "SequenceData",
    "TrackedBox",
    "cumulative_report",
    "detection_pr",
    "hota",
    "hota_alpha",
    "mape",
    "match_frames",
    "mpe",
    "Frame",
    "Fruit",
    "ScenarioConfig",
    "camera_path",
    "generate_scene",
    "render_frame",
    "simulate_sequence",
]
