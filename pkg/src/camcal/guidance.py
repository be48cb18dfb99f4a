"""Target-pose scheduling and the per-session capture state machine.

The server steers a client through a fixed sequence of board poses:
fronto-parallel views at three depths (focal length), steep tilts about
both axes (principal point / focal disambiguation), then placements that
push the board into each image quadrant (distortion coverage). Poses are
expressed in the camera frame of a nominal camera ``K_guess`` — the
client's true intrinsics are unknown before calibration, so targets are
defined by where their projections land on screen, not by metric truth.

All state transitions are pure: ``advance`` returns a new SessionState.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np
from scipy.spatial.transform import Rotation

from .board import BoardSpec, Pose, ViewObservation, corner_array
from .camera_model import CameraIntrinsics, DistortionParams, project
from .errors import InfeasibleTarget, SessionNotCapturing
from .store import CameraKey

MIN_TARGETS = 3
MIN_VISIBLE_FRACTION = 0.6
Z_MIN, Z_MAX = 0.1, 10.0

BASE_TAU = 20.0          # pixels at 720p, scaled with image height
BASE_HFOV_DEG = 60.0     # nominal horizontal field of view for K_guess


class SessionStatus(str, enum.Enum):
    CAPTURING = "capturing"
    COMPLETE = "complete"
    FAILED = "failed"


class AdvanceResult(str, enum.Enum):
    ACCEPTED = "accepted"
    REJECTED_POSE_MISMATCH = "rejected_pose_mismatch"
    SESSION_COMPLETE = "session_complete"


@dataclass(frozen=True)
class TargetPose:
    """One schedule entry: a board pose plus its screen-space overlay.

    ``outline_px`` is the projected outer board boundary (4 vertices,
    may extend past the frame); ``corner_targets`` maps corner ids to the
    pixel each should land on, restricted to in-frame corners.
    """

    index: int
    pose: Pose
    outline_px: tuple[tuple[float, float], ...]
    corner_targets: dict[int, tuple[float, float]]

    def __post_init__(self):
        if len(self.outline_px) < 3:
            raise ValueError("outline must have at least 3 vertices")
        if not self.corner_targets:
            raise ValueError("target has no visible corners")


@dataclass(frozen=True)
class SessionState:
    session_id: str
    camera_key: CameraKey
    schedule: tuple[TargetPose, ...]
    next_index: int = 0
    collected: tuple[ViewObservation, ...] = ()
    status: SessionStatus = SessionStatus.CAPTURING

    def __post_init__(self):
        if not 0 <= self.next_index <= len(self.schedule):
            raise ValueError("next_index out of range")
        done = len(self.collected) >= len(self.schedule)
        if (self.status is SessionStatus.COMPLETE) != done and self.status is not SessionStatus.FAILED:
            raise ValueError("status inconsistent with collected count")

    @property
    def current_target(self) -> TargetPose | None:
        if self.next_index >= len(self.schedule):
            return None
        return self.schedule[self.next_index]


def default_k_guess(img_size) -> CameraIntrinsics:
    """Nominal intrinsics for a camera we know nothing about: principal
    point at the image center, focal length from a 60 deg horizontal FOV."""
    w, h = float(img_size[0]), float(img_size[1])
    f = (w / 2.0) / np.tan(np.radians(BASE_HFOV_DEG) / 2.0)
    return CameraIntrinsics(fx=f, fy=f, cx=w / 2.0, cy=h / 2.0)


def default_tau(img_size) -> float:
    return BASE_TAU * float(img_size[1]) / 720.0


def _board_pose(board: BoardSpec, K: CameraIntrinsics,
                rx: float, ry: float, rz: float,
                dx_px: float, dy_px: float, z: float) -> Pose:
    """Rotate the board and place its center on the camera axis, shifted
    by (dx_px, dy_px) pixels at depth z."""
    r = Rotation.from_euler("xyz", [rx, ry, rz], degrees=True).as_matrix()
    center = np.array([dx_px * z / K.fx, dy_px * z / K.fy, z])
    board_center = np.array([board.width / 2.0, board.height / 2.0, 0.0])
    return Pose.from_matrix(r, center - r @ board_center)


def _fill_depth(board: BoardSpec, K: CameraIntrinsics, img_size, fill: float) -> float:
    """Depth at which the board spans `fill` of the limiting image dimension."""
    zw = K.fx * board.width / (fill * img_size[0])
    zh = K.fy * board.height / (fill * img_size[1])
    return max(zw, zh)


def _template_schedule(board, K, img_size):
    """(rx, ry, rz, dx_px, dy_px, z) tuples; fronto triple first so a
    3-target schedule is a pure prefix."""
    w, h = img_size

    def depth(fill):
        return _fill_depth(board, K, img_size, fill)

    near, mid, far = depth(0.85), depth(0.6), depth(0.4)
    tilt_z = depth(0.5)
    quad_z = depth(0.4)
    qx, qy = w / 4.0, h / 4.0
    return [
        (0, 0, 0, 0, 0, near),
        (0, 0, 0, 0, 0, mid),
        (0, 0, 0, 0, 0, far),
        (35, 0, 0, 0, 0, tilt_z),
        (-35, 0, 0, 0, 0, tilt_z),
        (0, 35, 0, 0, 0, tilt_z),
        (0, -35, 0, 0, 0, tilt_z),
        (0, 0, 0, -qx, -qy, quad_z),
        (0, 0, 0, qx, -qy, quad_z),
        (0, 0, 0, -qx, qy, quad_z),
        (0, 0, 0, qx, qy, quad_z),
    ]


def make_schedule(board: BoardSpec, img_size, n_targets: int = 10,
                  K_guess: CameraIntrinsics | None = None) -> list[TargetPose]:
    """Deterministic target schedule under the nominal camera.

    The first three targets are fronto-parallel at near/mid/far depth;
    then +/-35 deg tilts about x and y; then the four image quadrants.
    Requests beyond the 11 base templates repeat the cycle at 1.15x depth
    with a 30 deg in-plane spin per lap.

    Raises:
        InfeasibleTarget: a required depth leaves [0.1, 10] m, or fewer
            than 60% of the corners stay inside the frame.
    """
    if n_targets < MIN_TARGETS:
        raise ValueError(f"n_targets must be >= {MIN_TARGETS}, got {n_targets}")
    w, h = int(img_size[0]), int(img_size[1])
    if w <= 0 or h <= 0:
        raise ValueError(f"invalid img_size {img_size!r}")
    K = K_guess or default_k_guess((w, h))
    no_distortion = DistortionParams("rectilinear", (0.0, 0.0, 0.0))
    templates = _template_schedule(board, K, (w, h))
    corners = corner_array(board)

    schedule = []
    for index in range(n_targets):
        rx, ry, rz, dx, dy, z = templates[index % len(templates)]
        lap = index // len(templates)
        if lap:
            z *= 1.15 ** lap
            rz += 30.0 * lap
        if not Z_MIN <= z <= Z_MAX:
            raise InfeasibleTarget(
                f"target {index} needs depth {z:.3g} m outside [{Z_MIN}, {Z_MAX}]"
            )
        pose = _board_pose(board, K, rx, ry, rz, dx, dy, z)
        px = project(pose.apply(corners), K, no_distortion)
        inside = (
            (px[:, 0] >= 0) & (px[:, 0] < w) & (px[:, 1] >= 0) & (px[:, 1] < h)
        )
        if inside.mean() < MIN_VISIBLE_FRACTION:
            raise InfeasibleTarget(
                f"target {index} keeps only {inside.mean():.0%} of corners in frame"
            )
        outline = project(pose.apply(board.outline()), K, no_distortion)
        schedule.append(
            TargetPose(
                index=index,
                pose=pose,
                outline_px=tuple((float(x), float(y)) for x, y in outline),
                corner_targets={
                    int(cid): (float(px[cid, 0]), float(px[cid, 1]))
                    for cid in np.nonzero(inside)[0]
                },
            )
        )
    return schedule


def pose_reached(current: ViewObservation, target: TargetPose, tau: float) -> bool:
    """True when at least half the target corners are observed and their
    mean pixel distance to the overlay is within tau."""
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    observed = dict(zip(current.ids.tolist(), current.pixels))
    shared = [cid for cid in target.corner_targets if cid in observed]
    if len(shared) < 0.5 * len(target.corner_targets):
        return False
    dists = [
        float(np.hypot(*(observed[cid] - np.asarray(target.corner_targets[cid]))))
        for cid in shared
    ]
    return float(np.mean(dists)) <= tau


def advance(state: SessionState, obs: ViewObservation,
            tau: float) -> tuple[SessionState, AdvanceResult]:
    """Feed one observation to the session; returns the successor state."""
    if state.status is not SessionStatus.CAPTURING:
        raise SessionNotCapturing(f"session is {state.status.value}")
    target = state.schedule[state.next_index]
    if not pose_reached(obs, target, tau):
        return state, AdvanceResult.REJECTED_POSE_MISMATCH
    collected = state.collected + (obs,)
    next_index = state.next_index + 1
    if next_index >= len(state.schedule):
        new_state = replace(
            state, collected=collected, next_index=next_index,
            status=SessionStatus.COMPLETE,
        )
        return new_state, AdvanceResult.SESSION_COMPLETE
    return (
        replace(state, collected=collected, next_index=next_index),
        AdvanceResult.ACCEPTED,
    )
