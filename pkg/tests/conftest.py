"""Shared synthetic-camera helpers for the test suite."""

import numpy as np
from scipy.spatial.transform import Rotation

from camcal import (
    BoardSpec,
    CameraIntrinsics,
    DistortionModel,
    DistortionParams,
    Pose,
    simulate_detection,
)

# Moderate mix of depth, tilt and coverage for generic pipeline tests.
# Each entry: (rx, ry, rz degrees, dx, dy meters, z meters).
STANDARD_VIEWS = [
    (0, 0, 0, 0.00, 0.00, 0.50),
    (0, 0, 12, 0.00, 0.00, 0.70),
    (25, 0, 0, 0.00, 0.02, 0.55),
    (-25, 0, 5, 0.00, -0.02, 0.55),
    (0, 30, 0, 0.03, 0.00, 0.60),
    (0, -30, -8, -0.03, 0.00, 0.60),
    (15, 20, 45, 0.02, 0.02, 0.65),
    (-18, -15, -30, -0.04, 0.03, 0.75),
    (20, -25, 90, 0.04, -0.03, 0.80),
    (-10, 18, 160, -0.02, -0.02, 0.45),
]


def pose_centered(board: BoardSpec, K: CameraIntrinsics, img_size,
                  rx=0.0, ry=0.0, rz=0.0, dx=0.0, dy=0.0, z=0.5) -> Pose:
    """Pose placing the rotated board's center on the image-center ray,
    shifted by (dx, dy) meters, at depth z."""
    r = Rotation.from_euler("xyz", [rx, ry, rz], degrees=True).as_matrix()
    ray = np.array(
        [(img_size[0] / 2 - K.cx) / K.fx, (img_size[1] / 2 - K.cy) / K.fy, 1.0]
    )
    center = ray * z + np.array([dx, dy, 0.0])
    board_center = np.array([board.width / 2, board.height / 2, 0.0])
    return Pose.from_matrix(r, center - r @ board_center)


def synthesize_views(board, K, d, img_size, noise_sigma, seed, n=10):
    views = []
    for i, (rx, ry, rz, dx, dy, z) in enumerate(STANDARD_VIEWS[:n]):
        pose = pose_centered(board, K, img_size, rx, ry, rz, dx, dy, z)
        views.append(
            simulate_detection(board, pose, K, d, noise_sigma, seed + i, img_size)
        )
    return views


# --- high-precision setup: dense board, near-full fills, steep tilts ----
# Tuned so that at sigma = 0.2 px the estimator spread stays well inside
# fx/fy 0.5%, cx/cy 2 px, k1 0.01 (checked by Monte Carlo over seeds).

STRONG_BOARD = BoardSpec(squares_x=12, squares_y=9, square_length=0.02)


def _strong_schedule(board, K, img_size):
    def z(fill):
        return K.fx * board.width / (img_size[0] * fill)

    return [
        (0, 0, 0, 0.0, 0.0, z(0.98)),
        (0, 0, 90, 0.0, 0.0, z(0.80)),
        (0, 0, 30, 0.0, 0.0, z(0.50)),
        (55, 0, 0, 0.0, 0.0, z(0.70)),
        (-55, 0, 0, 0.0, 0.0, z(0.70)),
        (0, 55, 10, 0.0, 0.0, z(0.70)),
        (0, -55, -10, 0.0, 0.0, z(0.70)),
        (40, 40, 0, -0.05, -0.035, z(0.60)),
        (-40, -40, 0, 0.05, 0.035, z(0.60)),
        (-40, 40, 45, 0.05, -0.035, z(0.60)),
    ]


def strong_views(K, d, img_size, noise_sigma, seed, board=STRONG_BOARD):
    views = []
    for i, v in enumerate(_strong_schedule(board, K, img_size)):
        pose = pose_centered(board, K, img_size, *v)
        views.append(
            simulate_detection(board, pose, K, d, noise_sigma, seed * 100 + i, img_size)
        )
    return views


# --- wide-FOV fisheye setup: corners pushed toward the frame diagonal ---
# Reaches ~64 deg incidence, enough that a rectilinear refit misfits by
# far more than the injected noise while the closed-form init stays sane.

K_WIDE = CameraIntrinsics(fx=500.0, fy=500.0, cx=640.0, cy=360.0)
D_WIDE_FISHEYE = DistortionParams(DistortionModel.FISHEYE, (0.05, -0.01, 0.002))
WIDE_SIGMA = 0.05

_WIDE_VIEWS = [
    (0, 0, 0, 0.00, 0.00, 0.14),
    (0, 0, 20, 0.00, 0.00, 0.24),
    (25, 0, 0, 0.00, 0.10, 0.16),
    (-25, 0, 5, 0.00, -0.10, 0.16),
    (0, 30, 0, 0.18, 0.00, 0.18),
    (0, -30, -8, -0.18, 0.00, 0.18),
    (10, 12, 45, 0.20, 0.12, 0.19),
    (-12, -8, -30, -0.20, 0.12, 0.19),
    (12, -12, 90, 0.20, -0.12, 0.19),
    (-8, 10, 160, -0.20, -0.12, 0.19),
]


def wide_fov_views(img_size=(1280, 720), noise_sigma=WIDE_SIGMA, seed=0,
                   board=BoardSpec()):
    views = []
    for i, v in enumerate(_WIDE_VIEWS):
        pose = pose_centered(board, K_WIDE, img_size, *v)
        views.append(
            simulate_detection(
                board, pose, K_WIDE, D_WIDE_FISHEYE, noise_sigma,
                seed * 100 + i, img_size,
            )
        )
    return views
