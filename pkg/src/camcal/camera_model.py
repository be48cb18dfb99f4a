"""Pinhole camera model with radial (rectilinear) and fisheye distortion.

Conventions:
  - 3D points are camera-frame ``(..., 3)`` arrays, +Z in front of the camera.
  - Normalized image-plane coordinates are ``(x, y) = (X/Z, Y/Z)``.
  - Distortion acts on normalized coordinates; the camera matrix K is
    applied last: ``pixel = (fx * x' + cx, fy * y' + cy)``.

Distortion models (coefficients ``k1, k2, k3``):
  - rectilinear:  ``p * (1 + k1 r^2 + k2 r^4 + k3 r^6)``,  r = |p|
  - fisheye:      ``p / r * (theta + k1 theta^3 + k2 theta^5 + k3 theta^7)``,
                  theta = atan(r), with the theta/r -> 1 limit at r -> 0

All functions are pure and accept arbitrary leading batch dimensions.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import BehindCamera, NonConvergence

# Radius below which the fisheye theta/r ratio is replaced by its limit.
_R_EPS = 1e-8


class DistortionModel(str, enum.Enum):
    RECTILINEAR = "rectilinear"
    FISHEYE = "fisheye"


@dataclass(frozen=True)
class CameraIntrinsics:
    """Camera matrix content: focal lengths and principal point, in pixels.

    Skew is fixed at zero.
    """

    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        for name in ("fx", "fy", "cx", "cy"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite, got {v}")
            object.__setattr__(self, name, v)
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")

    def as_matrix(self) -> np.ndarray:
        """Return the 3x3 camera matrix with zero skew and [0, 0, 1] bottom row."""
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    @classmethod
    def from_matrix(cls, m) -> "CameraIntrinsics":
        m = np.asarray(m, dtype=float)
        if m.shape != (3, 3):
            raise ValueError(f"camera matrix must be 3x3, got shape {m.shape}")
        return cls(fx=m[0, 0], fy=m[1, 1], cx=m[0, 2], cy=m[1, 2])


@dataclass(frozen=True)
class DistortionParams:
    """Distortion model tag plus its three radial coefficients."""

    model: DistortionModel
    coefficients: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "model", DistortionModel(self.model))
        coeffs = tuple(float(c) for c in self.coefficients)
        if len(coeffs) != 3:
            raise ValueError(f"exactly 3 coefficients required, got {len(coeffs)}")
        if not all(math.isfinite(c) for c in coeffs):
            raise ValueError(f"coefficients must be finite, got {coeffs}")
        object.__setattr__(self, "coefficients", coeffs)


@dataclass(frozen=True)
class RectificationMap:
    """Per-destination-pixel source coordinates that undo lens distortion.

    ``map[v, u]`` holds the sub-pixel source (x, y) to sample for
    destination pixel (u, v) of a ``width`` x ``height`` image.
    """

    width: int
    height: int
    map: np.ndarray

    def __post_init__(self):
        if self.map.shape != (self.height, self.width, 2):
            raise ValueError(
                f"map shape {self.map.shape} does not match {self.height}x{self.width}x2"
            )


def _distorted_radius(r: np.ndarray, d: DistortionParams) -> np.ndarray:
    """Radial distortion profile g(r): the distorted radius for pristine radius r."""
    k1, k2, k3 = d.coefficients
    if d.model is DistortionModel.RECTILINEAR:
        r2 = r * r
        return r * (1.0 + r2 * (k1 + r2 * (k2 + r2 * k3)))
    theta = np.arctan(r)
    t2 = theta * theta
    return theta * (1.0 + t2 * (k1 + t2 * (k2 + t2 * k3)))


def _distorted_radius_deriv(r: np.ndarray, d: DistortionParams) -> np.ndarray:
    """dg/dr of the radial distortion profile."""
    k1, k2, k3 = d.coefficients
    if d.model is DistortionModel.RECTILINEAR:
        r2 = r * r
        return 1.0 + r2 * (3.0 * k1 + r2 * (5.0 * k2 + r2 * 7.0 * k3))
    theta = np.arctan(r)
    t2 = theta * theta
    dpsi_dtheta = 1.0 + t2 * (3.0 * k1 + t2 * (5.0 * k2 + t2 * 7.0 * k3))
    return dpsi_dtheta / (1.0 + r * r)


def distort(p, d: DistortionParams) -> np.ndarray:
    """Apply lens distortion to normalized image-plane points.

    Args:
        p: (..., 2) normalized coordinates, the ideal pinhole projection.
        d: distortion model and coefficients.

    Returns:
        (..., 2) distorted normalized coordinates.
    """
    p = np.asarray(p, dtype=float)
    r = np.linalg.norm(p, axis=-1)
    if d.model is DistortionModel.RECTILINEAR:
        k1, k2, k3 = d.coefficients
        r2 = r * r
        scale = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3))
    else:
        # theta/r -> 1 as r -> 0; the coefficient terms vanish with theta^2.
        safe = r > _R_EPS
        r_safe = np.where(safe, r, 1.0)
        scale = np.where(safe, _distorted_radius(r_safe, d) / r_safe, 1.0)
    return p * scale[..., None]


def distort_jacobian(p, d: DistortionParams) -> np.ndarray:
    """Jacobian of ``distort`` with respect to the input point.

    Args:
        p: (..., 2) normalized coordinates.

    Returns:
        (..., 2, 2) matrices d(distort)/dp.
    """
    p = np.asarray(p, dtype=float)
    x, y = p[..., 0], p[..., 1]
    r = np.linalg.norm(p, axis=-1)
    k1, k2, k3 = d.coefficients
    eye = np.broadcast_to(np.eye(2), p.shape + (2,))
    outer = p[..., :, None] * p[..., None, :]
    if d.model is DistortionModel.RECTILINEAR:
        r2 = r * r
        scale = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3))
        # d(scale)/dp = 2 (k1 + 2 k2 r^2 + 3 k3 r^4) p
        dscale = 2.0 * (k1 + r2 * (2.0 * k2 + r2 * 3.0 * k3))
        return scale[..., None, None] * eye + dscale[..., None, None] * outer
    safe = r > _R_EPS
    r_safe = np.where(safe, r, 1.0)
    g = np.where(safe, _distorted_radius(r_safe, d) / r_safe, 1.0)
    gp = _distorted_radius_deriv(r_safe, d)
    # d(g(r))/dp = g'(r) p / r; chain through q = p * g(r).
    coef = np.where(safe, (gp - g) / (r_safe * r_safe), 0.0)
    return g[..., None, None] * eye + coef[..., None, None] * outer


def distort_coeff_jacobian(p, d: DistortionParams) -> np.ndarray:
    """Jacobian of ``distort`` with respect to (k1, k2, k3).

    Returns:
        (..., 2, 3) matrices d(distort)/dk.
    """
    p = np.asarray(p, dtype=float)
    r = np.linalg.norm(p, axis=-1)
    if d.model is DistortionModel.RECTILINEAR:
        r2 = r * r
        basis = np.stack([r2, r2 * r2, r2 * r2 * r2], axis=-1)
        return p[..., :, None] * basis[..., None, :]
    theta = np.arctan(r)
    safe = r > _R_EPS
    r_safe = np.where(safe, r, 1.0)
    t2 = theta * theta
    basis = np.stack([theta * t2, theta * t2 * t2, theta * t2 * t2 * t2], axis=-1)
    basis = np.where(safe[..., None], basis / r_safe[..., None], 0.0)
    return p[..., :, None] * basis[..., None, :]


def undistort(p_d, d: DistortionParams, tol: float = 1e-10, max_iter: int = 50) -> np.ndarray:
    """Invert lens distortion on normalized image-plane points.

    Solves the scalar radial equation g(r) = r_d with a damped Newton
    iteration; the direction of each point is preserved.

    Args:
        p_d: (..., 2) distorted normalized coordinates.
        d: distortion model and coefficients.
        tol: required bound on |distort(result) - p_d|.
        max_iter: Newton iteration cap per point.

    Raises:
        NonConvergence: iteration did not reach tol within max_iter.
    """
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    p_d = np.asarray(p_d, dtype=float)
    r_d = np.linalg.norm(p_d, axis=-1)
    flat_rd = np.atleast_1d(r_d).ravel()

    if d.model is DistortionModel.RECTILINEAR:
        root = _invert_radial(flat_rd, d, tol, max_iter, upper=None)
    else:
        # Solve psi(theta) = r_d for theta, then r = tan(theta).
        theta = _invert_radial(flat_rd, d, tol, max_iter, upper=math.pi / 2 - 1e-9, fisheye=True)
        if np.any(theta >= math.pi / 2 - 1e-9):
            raise NonConvergence("incoming ray at or beyond 90 degrees cannot be unprojected")
        root = np.tan(theta)

    safe = flat_rd > _R_EPS
    scale = np.where(safe, root / np.where(safe, flat_rd, 1.0), 1.0)
    if p_d.ndim == 1:
        return p_d * scale[0]
    return p_d * scale.reshape(r_d.shape)[..., None]


def _invert_radial(r_d: np.ndarray, d: DistortionParams, tol: float, max_iter: int,
                   upper: float | None, fisheye: bool = False) -> np.ndarray:
    """Solve g(x) = r_d per element with damped Newton steps.

    For the rectilinear model x is the pristine radius; for fisheye x is
    theta and g is the odd polynomial psi.
    """

    def g(x):
        if not fisheye:
            return _distorted_radius(x, d)
        k1, k2, k3 = d.coefficients
        x2 = x * x
        return x * (1.0 + x2 * (k1 + x2 * (k2 + x2 * k3)))

    def gprime(x):
        if not fisheye:
            return _distorted_radius_deriv(x, d)
        k1, k2, k3 = d.coefficients
        x2 = x * x
        return 1.0 + x2 * (3.0 * k1 + x2 * (5.0 * k2 + x2 * 7.0 * k3))

    x = r_d.copy()
    if upper is not None:
        np.clip(x, 0.0, upper, out=x)
    f = g(x) - r_d
    active = np.abs(f) > tol
    for _ in range(max_iter):
        if not active.any():
            break
        gp = gprime(x)
        gp = np.where(np.abs(gp) < 1e-14, np.copysign(1e-14, gp + (gp == 0)), gp)
        step = np.where(active, f / gp, 0.0)
        # Halve any step that fails to reduce the residual or leaves the domain.
        for _ in range(40):
            x_new = x - step
            np.clip(x_new, 0.0, upper if upper is not None else np.inf, out=x_new)
            f_new = g(x_new) - r_d
            bad = active & (np.abs(f_new) > np.abs(f)) & (np.abs(step) > 1e-300)
            if not bad.any():
                break
            step = np.where(bad, step * 0.5, step)
        x = x_new
        f = f_new
        active = np.abs(f) > tol
    if active.any():
        raise NonConvergence(
            f"radial inversion failed for {int(active.sum())} point(s) after {max_iter} iterations"
        )
    return x


def project(points, K: CameraIntrinsics, d: DistortionParams) -> np.ndarray:
    """Project camera-frame 3D points to pixel coordinates.

    Args:
        points: (..., 3) 3D points with Z > 0.
        K: camera intrinsics, applied after distortion.
        d: distortion model and coefficients.

    Raises:
        BehindCamera: any point has Z <= 0.
    """
    points = np.asarray(points, dtype=float)
    z = points[..., 2]
    if np.any(z <= 0):
        raise BehindCamera(f"{int(np.sum(z <= 0))} point(s) have Z <= 0")
    n = points[..., :2] / z[..., None]
    q = distort(n, d)
    return np.stack(
        [K.fx * q[..., 0] + K.cx, K.fy * q[..., 1] + K.cy], axis=-1
    )


def unproject(pixels, K: CameraIntrinsics, d: DistortionParams,
              tol: float = 1e-10, max_iter: int = 50) -> np.ndarray:
    """Map pixel coordinates back to normalized image-plane coordinates.

    The result is the (X/Z, Y/Z) of any camera-frame point that projects
    to the given pixel.

    Raises:
        NonConvergence: propagated from the distortion inversion.
    """
    pixels = np.asarray(pixels, dtype=float)
    n = np.stack(
        [(pixels[..., 0] - K.cx) / K.fx, (pixels[..., 1] - K.cy) / K.fy], axis=-1
    )
    return undistort(n, d, tol=tol, max_iter=max_iter)


def compute_rectification_map(K: CameraIntrinsics, d: DistortionParams,
                              K_new: CameraIntrinsics, size: tuple[int, int]) -> RectificationMap:
    """Build the source-coordinate map that rectifies a distorted image.

    For each destination pixel q the map holds the distorted-image source
    position of the ray that q sees under (K_new, zero distortion).
    Sampling the source image through this map removes lens distortion.

    Args:
        size: (width, height) of the destination image.
    """
    width, height = int(size[0]), int(size[1])
    if width <= 0 or height <= 0:
        raise ValueError(f"size must be positive, got {size}")
    u, v = np.meshgrid(np.arange(width, dtype=float), np.arange(height, dtype=float))
    n = np.stack([(u - K_new.cx) / K_new.fx, (v - K_new.cy) / K_new.fy], axis=-1)
    q = distort(n, d)
    src = np.stack([K.fx * q[..., 0] + K.cx, K.fy * q[..., 1] + K.cy], axis=-1)
    return RectificationMap(width=width, height=height, map=src)
