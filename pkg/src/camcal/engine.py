"""Intrinsics fitting: homography estimation, closed-form initialization,
pose recovery and joint Levenberg-Marquardt refinement.

The pipeline follows the planar-target recipe: estimate one homography per
view (DLT with Hartley normalization), solve the absolute-conic constraints
for the camera matrix (zero skew, so 5 unknowns and 2 constraints per
view), decompose each homography into a board pose, then refine camera
matrix, distortion coefficients and all poses jointly against the raw
keypoint measurements.

Rotations are parameterized as rotation vectors inside the optimizer and
converted to quaternion :class:`~camcal.board.Pose` at the boundary.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from .board import BoardSpec, Pose, ViewObservation, corner_array
from .camera_model import (
    CameraIntrinsics,
    DistortionModel,
    DistortionParams,
    distort,
    distort_coeff_jacobian,
    distort_jacobian,
)
from .errors import (
    BehindCamera,
    DegenerateConfiguration,
    DegenerateMotion,
    InsufficientData,
    NumericalFailure,
)

MIN_VIEWS = 3
MIN_CORNERS_PER_VIEW = 6


@dataclass(frozen=True)
class CalibrationResult:
    """Fitted intrinsics plus the per-view poses and residual summary.

    ``avg_reprojection_error`` is the RMS over per-corner Euclidean
    residuals, sqrt(sum ||r_ij||^2 / N). ``cost_history`` records the sum
    of squared residuals after each accepted optimizer step (diagnostic).
    """

    intrinsics: CameraIntrinsics
    distortion: DistortionParams
    img_size: tuple[int, int]
    avg_reprojection_error: float
    per_view_poses: tuple[Pose, ...]
    n_views: int
    cost_history: tuple[float, ...] = field(default=(), repr=False)

    def __post_init__(self):
        err = float(self.avg_reprojection_error)
        if not (np.isfinite(err) and err >= 0):
            raise ValueError(f"avg_reprojection_error must be finite and >= 0, got {err}")
        if self.n_views != len(self.per_view_poses):
            raise ValueError(
                f"n_views={self.n_views} does not match {len(self.per_view_poses)} poses"
            )
        object.__setattr__(self, "avg_reprojection_error", err)
        object.__setattr__(self, "img_size", (int(self.img_size[0]), int(self.img_size[1])))
        object.__setattr__(self, "per_view_poses", tuple(self.per_view_poses))


@dataclass
class LMOptions:
    max_iter: int = 100
    gradient_tol: float = 1e-12
    lambda_init: float = 1e-3
    step_tol: float = 1e-14
    lambda_max: float = 1e12


@dataclass
class LMReport:
    x: np.ndarray
    cost_history: list[float]
    n_iter: int
    converged: bool


def _skew(v: np.ndarray) -> np.ndarray:
    return np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0.0]])


def rotate_points_jacobian(rotvec: np.ndarray, points: np.ndarray) -> np.ndarray:
    """d(R(w) X)/dw for each point X, with R the Rodrigues rotation of w.

    Uses the closed form for the derivative of the exponential map; falls
    back to the w -> 0 limit -[X]x below 1e-9 rotation angle.

    Returns:
        (N, 3, 3) with [n, :, i] = d(R X_n)/dw_i.
    """
    points = np.asarray(points, dtype=float)
    theta2 = float(rotvec @ rotvec)
    if theta2 < 1e-18:
        out = np.zeros(points.shape[:-1] + (3, 3))
        x, y, z = points[..., 0], points[..., 1], points[..., 2]
        out[..., 0, 1], out[..., 0, 2] = z, -y
        out[..., 1, 0], out[..., 1, 2] = -z, x
        out[..., 2, 0], out[..., 2, 1] = y, -x
        return out
    R = Rotation.from_rotvec(rotvec).as_matrix()
    W = _skew(rotvec)
    eye = np.eye(3)
    cols = []
    for i in range(3):
        a = rotvec[i] * W + _skew(np.cross(rotvec, (eye - R) @ eye[:, i]))
        cols.append(points @ (a / theta2 @ R).T)
    return np.stack(cols, axis=-1)


def apply_homography(H: np.ndarray, pts) -> np.ndarray:
    """Map (..., 2) points through a 3x3 homography, dehomogenizing."""
    pts = np.asarray(pts, dtype=float)
    ones = np.ones(pts.shape[:-1] + (1,))
    hp = np.concatenate([pts, ones], axis=-1) @ H.T
    return hp[..., :2] / hp[..., 2:]


def _normalizing_transform(pts: np.ndarray) -> np.ndarray:
    """Hartley conditioning: centroid to origin, RMS distance to sqrt(2)."""
    c = pts.mean(axis=0)
    rms = np.sqrt(np.mean(np.sum((pts - c) ** 2, axis=1)))
    if rms < 1e-15:
        raise DegenerateConfiguration("all points coincide")
    s = np.sqrt(2.0) / rms
    return np.array([[s, 0.0, -s * c[0]], [0.0, s, -s * c[1]], [0.0, 0.0, 1.0]])


def _check_spread(pts: np.ndarray, what: str) -> None:
    _, sv, _ = np.linalg.svd(pts - pts.mean(axis=0))
    if sv[0] < 1e-15 or sv[1] < 1e-10 * sv[0]:
        raise DegenerateConfiguration(f"{what} points are collinear")


def estimate_homography(object_xy, image_px) -> np.ndarray:
    """DLT homography from board-plane points to image pixels.

    Both point sets are Hartley-normalized before the SVD solve. The result
    is scaled so its bottom-right entry is 1.

    Raises:
        DegenerateConfiguration: fewer than 4 points, collinear input, or a
            rank-deficient system.
    """
    obj = np.asarray(object_xy, dtype=float).reshape(-1, 2)
    img = np.asarray(image_px, dtype=float).reshape(-1, 2)
    if len(obj) != len(img):
        raise ValueError(f"point count mismatch: {len(obj)} vs {len(img)}")
    if len(obj) < 4:
        raise DegenerateConfiguration(f"need at least 4 correspondences, got {len(obj)}")
    _check_spread(obj, "object")
    _check_spread(img, "image")

    t_obj = _normalizing_transform(obj)
    t_img = _normalizing_transform(img)
    on = apply_homography(t_obj, obj)
    im = apply_homography(t_img, img)

    a = np.zeros((2 * len(obj), 9))
    x, y = on[:, 0], on[:, 1]
    u, v = im[:, 0], im[:, 1]
    a[0::2, 3:6] = -np.column_stack([x, y, np.ones_like(x)])
    a[0::2, 6:9] = np.column_stack([v * x, v * y, v])
    a[1::2, 0:3] = np.column_stack([x, y, np.ones_like(x)])
    a[1::2, 6:9] = -np.column_stack([u * x, u * y, u])

    _, sv, vt = np.linalg.svd(a)
    if sv[-2] < 1e-10 * sv[0]:
        raise DegenerateConfiguration("homography system is rank-deficient")
    h = vt[-1].reshape(3, 3)
    h = np.linalg.inv(t_img) @ h @ t_obj
    if abs(h[2, 2]) < 1e-12 * np.linalg.norm(h):
        raise DegenerateConfiguration("homography has vanishing scale entry")
    h = h / h[2, 2]
    if abs(np.linalg.det(h)) <= 1e-12:
        raise DegenerateConfiguration("homography is singular")
    return h


def _conic_row(h: np.ndarray, p: int, q: int) -> np.ndarray:
    """Constraint row v_pq for the zero-skew conic vector
    b = (B11, B22, B13, B23, B33)."""
    hp, hq = h[:, p], h[:, q]
    return np.array(
        [
            hp[0] * hq[0],
            hp[1] * hq[1],
            hp[2] * hq[0] + hp[0] * hq[2],
            hp[2] * hq[1] + hp[1] * hq[2],
            hp[2] * hq[2],
        ]
    )


def init_intrinsics_zhang(homographies, img_size) -> CameraIntrinsics:
    """Closed-form camera matrix from the absolute-conic constraints.

    Each homography contributes the orthogonality and equal-norm
    constraints on B = K^-T K^-1; skew is fixed at zero, leaving five
    unknowns. Homographies are conditioned by a nominal camera built from
    the image size before the solve.

    Raises:
        DegenerateMotion: the stacked constraint system is rank-deficient
            (e.g. all views fronto-parallel) or yields no positive
            focal lengths.
    """
    if len(homographies) < 3:
        raise ValueError(f"need at least 3 homographies, got {len(homographies)}")
    w, h = float(img_size[0]), float(img_size[1])
    f0 = (w + h) / 2.0
    n_inv = np.array([[1.0 / f0, 0.0, -w / (2 * f0)], [0.0, 1.0 / f0, -h / (2 * f0)], [0.0, 0.0, 1.0]])

    rows = []
    for hom in homographies:
        hn = n_inv @ np.asarray(hom, dtype=float)
        hn = hn / np.linalg.norm(hn)
        rows.append(_conic_row(hn, 0, 1))
        rows.append(_conic_row(hn, 0, 0) - _conic_row(hn, 1, 1))
    v = np.array(rows)

    _, sv, vt = np.linalg.svd(v)
    if sv[3] < 1e-9 * sv[0]:
        raise DegenerateMotion("board orientations do not constrain the camera matrix")
    b11, b22, b13, b23, b33 = vt[-1]
    if abs(b11) < 1e-15 or abs(b22) < 1e-15:
        raise DegenerateMotion("conic solution has vanishing diagonal")
    cx = -b13 / b11
    cy = -b23 / b22
    lam = b33 - (b13 * b13 / b11 + b23 * b23 / b22)
    fx2 = lam / b11
    fy2 = lam / b22
    if fx2 <= 0 or fy2 <= 0:
        raise DegenerateMotion("conic solution is not positive definite")
    return CameraIntrinsics(
        fx=f0 * np.sqrt(fx2),
        fy=f0 * np.sqrt(fy2),
        cx=f0 * cx + w / 2.0,
        cy=f0 * cy + h / 2.0,
    )


def estimate_view_pose(H: np.ndarray, K: CameraIntrinsics) -> Pose:
    """Board pose from a plane homography and known camera matrix.

    K^-1 H is scaled so the first rotation column has unit norm, the sign
    is chosen to put the board in front of the camera, and the rotation is
    projected to the nearest orthonormal matrix.

    Raises:
        BehindCamera: no sign choice yields positive board depth.
    """
    a = np.linalg.inv(K.as_matrix()) @ np.asarray(H, dtype=float)
    norm1 = np.linalg.norm(a[:, 0])
    if norm1 < 1e-15:
        raise BehindCamera("homography column collapses under K^-1")
    lam = 1.0 / norm1
    if lam * a[2, 2] < 0:
        lam = -lam
    r1 = lam * a[:, 0]
    r2 = lam * a[:, 1]
    t = lam * a[:, 2]
    if t[2] <= 0:
        raise BehindCamera(f"recovered board depth is {t[2]:.6g}")
    q = np.column_stack([r1, r2, np.cross(r1, r2)])
    u, _, vt = np.linalg.svd(q)
    r = u @ vt
    if np.linalg.det(r) < 0:
        r = u @ np.diag([1.0, 1.0, -1.0]) @ vt
    return Pose.from_matrix(r, t)


class ReprojectionProblem:
    """Residuals and analytic Jacobian of the joint calibration problem.

    The parameter vector is ``[fx, fy, cx, cy, k1, k2, k3]`` followed by
    ``(rotation_vector, translation)`` per view. Residuals are
    ``predicted - measured`` pixel coordinates, two rows per corner, views
    concatenated in order.
    """

    def __init__(self, views: list[ViewObservation], board: BoardSpec, model: DistortionModel):
        self.model = DistortionModel(model)
        corners = corner_array(board)
        self.object_points = [corners[v.ids] for v in views]
        self.measured = [v.pixels for v in views]
        self.n_views = len(views)
        self.counts = [len(v) for v in views]
        self.n_residuals = 2 * sum(self.counts)
        self.n_params = 7 + 6 * self.n_views

    def pack(self, K: CameraIntrinsics, d: DistortionParams, poses: list[Pose]) -> np.ndarray:
        x = np.empty(self.n_params)
        x[0:4] = (K.fx, K.fy, K.cx, K.cy)
        x[4:7] = d.coefficients
        for i, pose in enumerate(poses):
            base = 7 + 6 * i
            w, qx, qy, qz = pose.q
            x[base:base + 3] = Rotation.from_quat([qx, qy, qz, w]).as_rotvec()
            x[base + 3:base + 6] = pose.t
        return x

    def unpack(self, x: np.ndarray) -> tuple[CameraIntrinsics, DistortionParams, list[Pose]]:
        K = CameraIntrinsics(fx=x[0], fy=x[1], cx=x[2], cy=x[3])
        d = DistortionParams(model=self.model, coefficients=tuple(x[4:7]))
        poses = []
        for i in range(self.n_views):
            base = 7 + 6 * i
            r = Rotation.from_rotvec(x[base:base + 3]).as_matrix()
            poses.append(Pose.from_matrix(r, x[base + 3:base + 6]))
        return K, d, poses

    def _forward(self, x: np.ndarray, i: int):
        """Per-view forward pass; returns None when a corner leaves Z > 0."""
        base = 7 + 6 * i
        rotvec = x[base:base + 3]
        t = x[base + 3:base + 6]
        p = self.object_points[i] @ Rotation.from_rotvec(rotvec).as_matrix().T + t
        z = p[:, 2]
        if np.any(z <= 1e-12):
            return None
        n = p[:, :2] / z[:, None]
        d = DistortionParams(model=self.model, coefficients=tuple(x[4:7]))
        q = distort(n, d)
        pred = q * x[0:2] + x[2:4]
        return p, n, d, q, pred

    def residuals(self, x: np.ndarray) -> np.ndarray | None:
        out = np.empty(self.n_residuals)
        pos = 0
        for i in range(self.n_views):
            fwd = self._forward(x, i)
            if fwd is None:
                return None
            pred = fwd[4]
            r = (pred - self.measured[i]).ravel()
            out[pos:pos + r.size] = r
            pos += r.size
        if not np.all(np.isfinite(out)):
            return None
        return out

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        jac = np.zeros((self.n_residuals, self.n_params))
        fx, fy = x[0], x[1]
        pos = 0
        for i in range(self.n_views):
            fwd = self._forward(x, i)
            if fwd is None:
                raise NumericalFailure("Jacobian requested at an infeasible point")
            p, n, d, q, _ = fwd
            count = self.counts[i]
            z = p[:, 2]

            dq_dn = distort_jacobian(n, d)
            dq_dk = distort_coeff_jacobian(n, d)
            focal = np.array([fx, fy])

            # d pred / d (fx, fy, cx, cy)
            dk_block = np.zeros((count, 2, 4))
            dk_block[:, 0, 0] = q[:, 0]
            dk_block[:, 1, 1] = q[:, 1]
            dk_block[:, 0, 2] = 1.0
            dk_block[:, 1, 3] = 1.0

            dpred_dn = focal[None, :, None] * dq_dn
            dpred_dk = focal[None, :, None] * dq_dk

            dn_dp = np.zeros((count, 2, 3))
            dn_dp[:, 0, 0] = 1.0 / z
            dn_dp[:, 1, 1] = 1.0 / z
            dn_dp[:, 0, 2] = -p[:, 0] / (z * z)
            dn_dp[:, 1, 2] = -p[:, 1] / (z * z)

            dpred_dp = dpred_dn @ dn_dp
            base = 7 + 6 * i
            dp_dw = rotate_points_jacobian(x[base:base + 3], self.object_points[i])

            rows = slice(pos, pos + 2 * count)
            jac[rows, 0:4] = dk_block.reshape(-1, 4)
            jac[rows, 4:7] = dpred_dk.reshape(-1, 3)
            jac[rows, base:base + 3] = (dpred_dp @ dp_dw).reshape(-1, 3)
            jac[rows, base + 3:base + 6] = dpred_dp.reshape(-1, 3)
            pos += 2 * count
        if not np.all(np.isfinite(jac)):
            raise NumericalFailure("non-finite Jacobian")
        return jac


def lm_minimize(residual_fn, jacobian_fn, x0: np.ndarray, opts: LMOptions | None = None) -> LMReport:
    """Dense Levenberg-Marquardt with multiplicative damping.

    The damping factor is multiplied by 10 on a rejected step and divided
    by 10 on an accepted one; steps are accepted only when they strictly
    decrease the sum of squared residuals, so ``cost_history`` is
    monotone decreasing. ``residual_fn`` may return None to flag an
    infeasible trial point.
    """
    opts = opts or LMOptions()
    x = np.asarray(x0, dtype=float).copy()
    r = residual_fn(x)
    if r is None or not np.all(np.isfinite(r)):
        raise NumericalFailure("initial point is infeasible")
    cost = float(r @ r)
    history = [cost]
    lam = opts.lambda_init
    converged = False
    n_iter = 0

    for n_iter in range(1, opts.max_iter + 1):
        jac = jacobian_fn(x)
        grad = jac.T @ r
        if np.max(np.abs(grad)) <= opts.gradient_tol:
            converged = True
            break
        jtj = jac.T @ jac
        diag = np.maximum(np.diag(jtj), 1e-12)

        stepped = False
        while lam <= opts.lambda_max:
            try:
                delta = np.linalg.solve(jtj + lam * np.diag(diag), -grad)
            except np.linalg.LinAlgError:
                delta = None
            if delta is not None and np.all(np.isfinite(delta)):
                x_new = x + delta
                r_new = residual_fn(x_new)
                if r_new is not None:
                    cost_new = float(r_new @ r_new)
                    if np.isfinite(cost_new) and cost_new < cost:
                        x, r, cost = x_new, r_new, cost_new
                        history.append(cost)
                        lam = max(lam / 10.0, 1e-15)
                        stepped = True
                        if np.linalg.norm(delta) <= opts.step_tol * (np.linalg.norm(x) + opts.step_tol):
                            converged = True
                        break
            lam *= 10.0
        if not stepped:
            # Damping exhausted without an acceptable step: local minimum
            # to numerical precision.
            converged = True
            break
        if converged:
            break

    return LMReport(x=x, cost_history=history, n_iter=n_iter, converged=converged)


def _result_from(problem: ReprojectionProblem, x: np.ndarray, img_size,
                 history: tuple[float, ...]) -> CalibrationResult:
    K, d, poses = problem.unpack(x)
    r = problem.residuals(x)
    if r is None:
        raise NumericalFailure("final parameters are infeasible")
    rms = float(np.sqrt(r @ r / (problem.n_residuals / 2)))
    return CalibrationResult(
        intrinsics=K,
        distortion=d,
        img_size=(int(img_size[0]), int(img_size[1])),
        avg_reprojection_error=rms,
        per_view_poses=tuple(poses),
        n_views=problem.n_views,
        cost_history=history,
    )


def refine_lm(views: list[ViewObservation], board: BoardSpec, init: CalibrationResult,
              model: DistortionModel | str, opts: LMOptions | None = None) -> CalibrationResult:
    """Jointly refine intrinsics, distortion and per-view poses.

    Minimizes the sum of squared pixel residuals over the 7 camera
    parameters and 6 pose parameters per view, starting from ``init``.
    Initial coefficients carry over only when ``init`` uses the same
    distortion model; otherwise they start at zero.

    Raises:
        InsufficientData: fewer than 3 views.
        NumericalFailure: non-finite cost or Jacobian.
    """
    model = DistortionModel(model)
    if len(views) < MIN_VIEWS:
        raise InsufficientData(f"need at least {MIN_VIEWS} views, got {len(views)}")
    for i, v in enumerate(views):
        if len(v) < MIN_CORNERS_PER_VIEW:
            raise ValueError(f"view {i} has {len(v)} corners, need >= {MIN_CORNERS_PER_VIEW}")
    if len(init.per_view_poses) != len(views):
        raise ValueError("init must carry one pose per view")

    problem = ReprojectionProblem(views, board, model)
    k0 = init.distortion.coefficients if init.distortion.model is model else (0.0, 0.0, 0.0)
    x0 = problem.pack(init.intrinsics, DistortionParams(model, k0), list(init.per_view_poses))
    report = lm_minimize(problem.residuals, problem.jacobian, x0, opts)
    return _result_from(problem, report.x, init.img_size, tuple(report.cost_history))


def calibrate(views: list[ViewObservation], board: BoardSpec, model: DistortionModel | str,
              img_size, opts: LMOptions | None = None) -> CalibrationResult:
    """Full pipeline: homographies, closed-form init, poses, LM refinement.

    Views with fewer than 6 corners are dropped; at least 3 usable views
    must remain. Distortion always starts from zero coefficients.

    Raises:
        InsufficientData: fewer than 3 usable views.
    """
    model = DistortionModel(model)
    usable = [v for v in views if len(v) >= MIN_CORNERS_PER_VIEW]
    if len(usable) < MIN_VIEWS:
        raise InsufficientData(
            f"need at least {MIN_VIEWS} views with >= {MIN_CORNERS_PER_VIEW} corners, "
            f"got {len(usable)}"
        )
    corners = corner_array(board)
    homographies = [
        estimate_homography(corners[v.ids][:, :2], v.pixels) for v in usable
    ]
    k_init = init_intrinsics_zhang(homographies, img_size)
    poses = [estimate_view_pose(h, k_init) for h in homographies]

    problem = ReprojectionProblem(usable, board, model)
    x0 = problem.pack(k_init, DistortionParams(model), poses)
    r0 = problem.residuals(x0)
    if r0 is None:
        raise NumericalFailure("closed-form initialization is infeasible")
    init = _result_from(problem, x0, img_size, ())
    return refine_lm(usable, board, init, model, opts)


def refit(stored_views: list[ViewObservation], board: BoardSpec,
          new_model: DistortionModel | str, img_size,
          opts: LMOptions | None = None) -> CalibrationResult:
    """Re-run the calibration pipeline on stored keypoints under another
    distortion model; the reported error faithfully reflects any misfit."""
    return calibrate(stored_views, board, new_model, img_size, opts)


def fit_pose(object_points, image_px, K: CameraIntrinsics, d: DistortionParams,
             init: Pose, opts: LMOptions | None = None) -> Pose:
    """Pose-only refinement: find the board pose whose projection under a
    fixed camera best matches the given pixel targets."""
    object_points = np.asarray(object_points, dtype=float)
    image_px = np.asarray(image_px, dtype=float)

    def split(x):
        return x[0:3], x[3:6]

    def residuals(x):
        rotvec, t = split(x)
        p = object_points @ Rotation.from_rotvec(rotvec).as_matrix().T + t
        z = p[:, 2]
        if np.any(z <= 1e-12):
            return None
        n = p[:, :2] / z[:, None]
        pred = distort(n, d) * (K.fx, K.fy) + (K.cx, K.cy)
        return (pred - image_px).ravel()

    def jacobian(x):
        rotvec, t = split(x)
        p = object_points @ Rotation.from_rotvec(rotvec).as_matrix().T + t
        z = p[:, 2]
        n = p[:, :2] / z[:, None]
        dpred_dn = np.array([K.fx, K.fy])[None, :, None] * distort_jacobian(n, d)
        dn_dp = np.zeros((len(p), 2, 3))
        dn_dp[:, 0, 0] = 1.0 / z
        dn_dp[:, 1, 1] = 1.0 / z
        dn_dp[:, 0, 2] = -p[:, 0] / (z * z)
        dn_dp[:, 1, 2] = -p[:, 1] / (z * z)
        dpred_dp = dpred_dn @ dn_dp
        dp_dw = rotate_points_jacobian(rotvec, object_points)
        return np.concatenate([(dpred_dp @ dp_dw).reshape(-1, 3), dpred_dp.reshape(-1, 3)], axis=1)

    w, qx, qy, qz = init.q
    x0 = np.concatenate([Rotation.from_quat([qx, qy, qz, w]).as_rotvec(), init.t])
    report = lm_minimize(residuals, jacobian, x0, opts)
    rotvec, t = split(report.x)
    return Pose.from_matrix(Rotation.from_rotvec(rotvec).as_matrix(), t)
