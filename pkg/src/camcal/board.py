"""Calibration board geometry and a simulated keypoint detector.

The board is a chessboard-style planar target whose interior corners carry
stable integer ids (row-major), so a view may cover only part of the board
and still yield identified measurements. The simulated detector replaces
pixel-space corner detection: it projects the known geometry through a
known camera and pose, adds Gaussian pixel noise and drops out-of-frame
corners, which keeps ground truth available for every observation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

from . import camera_model
from .camera_model import CameraIntrinsics, DistortionParams


@dataclass(frozen=True)
class BoardSpec:
    """Board dimensions: square counts and physical square edge length."""

    squares_x: int = 8
    squares_y: int = 5
    square_length: float = 0.03  # meters

    def __post_init__(self):
        if self.squares_x < 3 or self.squares_y < 3:
            raise ValueError(
                f"board needs at least 3x3 squares, got {self.squares_x}x{self.squares_y}"
            )
        if not (self.square_length > 0 and math.isfinite(self.square_length)):
            raise ValueError(f"square_length must be positive, got {self.square_length}")

    @property
    def corner_count(self) -> int:
        return (self.squares_x - 1) * (self.squares_y - 1)

    @property
    def width(self) -> float:
        """Full board width in meters."""
        return self.squares_x * self.square_length

    @property
    def height(self) -> float:
        """Full board height in meters."""
        return self.squares_y * self.square_length

    def outline(self) -> np.ndarray:
        """(4, 3) outer board corners on the Z=0 plane, counter-clockwise."""
        w, h = self.width, self.height
        return np.array([[0.0, 0.0, 0.0], [w, 0.0, 0.0], [w, h, 0.0], [0.0, h, 0.0]])


@dataclass(frozen=True)
class Pose:
    """Rigid board-to-camera transform: unit quaternion (w, x, y, z) and
    translation of the board origin in the camera frame (meters)."""

    q: tuple[float, float, float, float]
    t: tuple[float, float, float]

    def __post_init__(self):
        q = tuple(float(v) for v in self.q)
        t = tuple(float(v) for v in self.t)
        if len(q) != 4 or len(t) != 3:
            raise ValueError("pose needs a 4-quaternion and a 3-translation")
        norm = math.sqrt(sum(v * v for v in q))
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"quaternion norm must be 1 within 1e-9, got {norm}")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "t", t)

    @classmethod
    def from_matrix(cls, rotation: np.ndarray, translation) -> "Pose":
        q = Rotation.from_matrix(np.asarray(rotation, dtype=float)).as_quat()  # x, y, z, w
        q = q / np.linalg.norm(q)
        if q[3] < 0:
            q = -q
        return cls(q=(q[3], q[0], q[1], q[2]), t=tuple(float(v) for v in translation))

    def rotation_matrix(self) -> np.ndarray:
        w, x, y, z = self.q
        return Rotation.from_quat([x, y, z, w]).as_matrix()

    def apply(self, points) -> np.ndarray:
        """Transform (..., 3) board-frame points into the camera frame."""
        pts = np.asarray(points, dtype=float)
        return pts @ self.rotation_matrix().T + np.asarray(self.t)


def corner_object_points(spec: BoardSpec) -> list[tuple[int, np.ndarray]]:
    """Interior chessboard corners on the board plane, id order row-major.

    Corner (row i, column j), both 1-based over the interior grid, sits at
    (j * square_length, i * square_length, 0).
    """
    out = []
    s = spec.square_length
    corner_id = 0
    for i in range(1, spec.squares_y):
        for j in range(1, spec.squares_x):
            out.append((corner_id, np.array([j * s, i * s, 0.0])))
            corner_id += 1
    return out


def corner_array(spec: BoardSpec) -> np.ndarray:
    """(N, 3) interior corner positions, row index == corner id."""
    return np.stack([p for _, p in corner_object_points(spec)])


@dataclass(frozen=True)
class ViewObservation:
    """Identified 2D keypoints of one view: (corner_id, pixel) pairs."""

    points: tuple[tuple[int, tuple[float, float]], ...]
    img_size: tuple[int, int]

    def __post_init__(self):
        w, h = self.img_size
        if w <= 0 or h <= 0:
            raise ValueError(f"img_size must be positive, got {self.img_size}")
        pts = []
        seen = set()
        for corner_id, px in self.points:
            corner_id = int(corner_id)
            x, y = float(px[0]), float(px[1])
            if corner_id in seen:
                raise ValueError(f"duplicate corner id {corner_id} in view")
            seen.add(corner_id)
            if not (0 <= x < w and 0 <= y < h):
                raise ValueError(f"pixel ({x}, {y}) outside image {w}x{h}")
            pts.append((corner_id, (x, y)))
        object.__setattr__(self, "points", tuple(pts))
        object.__setattr__(self, "img_size", (int(w), int(h)))

    def __len__(self) -> int:
        return len(self.points)

    @property
    def ids(self) -> np.ndarray:
        return np.array([i for i, _ in self.points], dtype=int)

    @property
    def pixels(self) -> np.ndarray:
        if not self.points:
            return np.empty((0, 2))
        return np.array([px for _, px in self.points], dtype=float)


def simulate_detection(spec: BoardSpec, pose: Pose, K: CameraIntrinsics,
                       d: DistortionParams, noise_sigma: float, seed: int,
                       img_size: tuple[int, int]) -> ViewObservation:
    """Project every board corner and report the in-frame ones as keypoints.

    Noise is isotropic Gaussian per pixel coordinate, drawn deterministically
    from ``seed``; corners behind the camera or (after noise) outside the
    image are dropped, so the result may be empty.
    """
    if noise_sigma < 0:
        raise ValueError(f"noise_sigma must be >= 0, got {noise_sigma}")
    corners = corner_array(spec)
    cam_pts = pose.apply(corners)
    noise = np.random.default_rng(seed).normal(0.0, noise_sigma, size=(len(corners), 2)) if noise_sigma > 0 else None

    w, h = img_size
    points = []
    in_front = cam_pts[:, 2] > 0
    if in_front.any():
        pixels = camera_model.project(cam_pts[in_front], K, d)
        if noise is not None:
            pixels = pixels + noise[in_front]
        for corner_id, (x, y) in zip(np.flatnonzero(in_front), pixels):
            if 0 <= x < w and 0 <= y < h:
                points.append((int(corner_id), (float(x), float(y))))
    return ViewObservation(points=tuple(points), img_size=(int(w), int(h)))
