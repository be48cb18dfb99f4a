"""camcal: camera intrinsics calibration — model, fitting engine, guided
capture service, calibration record store and simulation CLI."""

from .board import BoardSpec, Pose, ViewObservation, corner_object_points, simulate_detection
from .camera_model import (
    CameraIntrinsics,
    DistortionModel,
    DistortionParams,
    RectificationMap,
    compute_rectification_map,
    distort,
    project,
    undistort,
    unproject,
)
from .engine import CalibrationResult, calibrate, refine_lm, refit
from .guidance import (
    SessionState,
    SessionStatus,
    TargetPose,
    advance,
    default_k_guess,
    default_tau,
    make_schedule,
    pose_reached,
)
from .store import CalibStore, CalibrationRecord, CameraKey, ReliabilityThresholds

__version__ = "0.1.0"

__all__ = [
    "BoardSpec",
    "CalibStore",
    "CalibrationRecord",
    "CalibrationResult",
    "CameraIntrinsics",
    "CameraKey",
    "DistortionModel",
    "DistortionParams",
    "Pose",
    "RectificationMap",
    "ReliabilityThresholds",
    "SessionState",
    "SessionStatus",
    "TargetPose",
    "ViewObservation",
    "advance",
    "calibrate",
    "compute_rectification_map",
    "corner_object_points",
    "default_k_guess",
    "default_tau",
    "distort",
    "make_schedule",
    "pose_reached",
    "project",
    "refine_lm",
    "refit",
    "simulate_detection",
    "undistort",
    "unproject",
    "__version__",
]
