"""Multi-object tracking and gazing with a modeled-latency pipeline simulator."""

from .assignment import Assignment, CostMatrix, solve
from .errors import (
    ConfigError,
    DegenerateWeightsError,
    EmptyReportError,
    EvaluationInputError,
    FeatureUnavailableError,
    GazetrackError,
    InvalidStateError,
    InvalidTensorError,
    LineFormatError,
    MalformedHeadError,
    SingularUpdateError,
)
from .filtering import KalmanTrackState, MotionModel, gating_distance, initiate, predict, scalar_fuse, update
from .geometry import BBox, SIoUBreakdown, SIoUParams, bbox_to_state, iou, siou, state_to_bbox
from .kernels import BACKEND
from .tracker import Detection, StepOutput, Track, Tracker, TrackerConfig, TrackStatus

__version__ = "0.1.0"

__all__ = [
    "Assignment",
    "BACKEND",
    "BBox",
    "ConfigError",
    "CostMatrix",
    "DegenerateWeightsError",
    "Detection",
    "EmptyReportError",
    "EvaluationInputError",
    "FeatureUnavailableError",
    "GazetrackError",
    "InvalidStateError",
    "InvalidTensorError",
    "KalmanTrackState",
    "LineFormatError",
    "MalformedHeadError",
    "MotionModel",
    "SIoUBreakdown",
    "SIoUParams",
    "SingularUpdateError",
    "StepOutput",
    "Track",
    "TrackStatus",
    "Tracker",
    "TrackerConfig",
    "bbox_to_state",
    "gating_distance",
    "initiate",
    "iou",
    "predict",
    "scalar_fuse",
    "siou",
    "solve",
    "state_to_bbox",
    "update",
]
