"""Topological mapping and goal-directed navigation from global image descriptors."""

from .builder import MapBuilder, MapUpdate, UpdateKind, build_from_stream, optimize
from .descriptors import (
    ObservationDescriptors,
    ThresholdConfig,
    best_match,
    calibrate_thresholds,
    cosine_similarity,
    normalize,
    read_stream,
    write_stream,
)
from .graph import TopoArc, TopologicalMap, TopoNode, deserialize, serialize
from .navigator import (
    NEED_ROTATION,
    Action,
    LocalizationResult,
    Navigator,
    NeedRotation,
    Phase,
    StepOutcome,
    combine_cycles,
    localize,
    segment_vote,
    start_navigation,
)
from .simworld import (
    EpisodeReport,
    EvalRow,
    KinematicParams,
    Pose,
    RouteSpec,
    SimWorld,
    TeachRun,
    eval_suite,
    record_trajectory,
    run_episode,
    step,
    wrap_angle,
)

__version__ = "0.1.0"

__all__ = [
    "Action",
    "EpisodeReport",
    "EvalRow",
    "KinematicParams",
    "LocalizationResult",
    "MapBuilder",
    "MapUpdate",
    "NEED_ROTATION",
    "Navigator",
    "NeedRotation",
    "ObservationDescriptors",
    "Phase",
    "Pose",
    "RouteSpec",
    "SimWorld",
    "StepOutcome",
    "TeachRun",
    "ThresholdConfig",
    "TopoArc",
    "TopoNode",
    "TopologicalMap",
    "best_match",
    "build_from_stream",
    "calibrate_thresholds",
    "combine_cycles",
    "cosine_similarity",
    "deserialize",
    "eval_suite",
    "localize",
    "normalize",
    "optimize",
    "read_stream",
    "record_trajectory",
    "run_episode",
    "segment_vote",
    "serialize",
    "start_navigation",
    "step",
    "wrap_angle",
    "write_stream",
]
