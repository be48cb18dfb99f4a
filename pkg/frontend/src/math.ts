/** Camera math mirrored from the server so overlays and captures agree
 * with the service bit-for-bit (well, to 1e-9) on shared test vectors. */

export type Vec2 = [number, number];
export type Vec3 = [number, number, number];
/** Unit quaternion in wire order (w, x, y, z). */
export type Quat = [number, number, number, number];

export interface Intrinsics {
  fx: number;
  fy: number;
  cx: number;
  cy: number;
}

export type DistortionModel = "rectilinear" | "fisheye";

export interface Distortion {
  model: DistortionModel;
  coefficients: [number, number, number];
}

export interface Pose {
  q: Quat;
  t: Vec3;
}

const R_EPS = 1e-8;

export function quatNormalize(q: Quat): Quat {
  const n = Math.hypot(q[0], q[1], q[2], q[3]);
  if (n === 0) throw new Error("zero quaternion");
  const s = q[0] < 0 ? -1 / n : 1 / n; // canonical w >= 0
  return [q[0] * s, q[1] * s, q[2] * s, q[3] * s];
}

export function quatMultiply(a: Quat, b: Quat): Quat {
  const [aw, ax, ay, az] = a;
  const [bw, bx, by, bz] = b;
  return [
    aw * bw - ax * bx - ay * by - az * bz,
    aw * bx + ax * bw + ay * bz - az * by,
    aw * by - ax * bz + ay * bw + az * bx,
    aw * bz + ax * by - ay * bx + az * bw,
  ];
}

export function quatConjugate(q: Quat): Quat {
  return [q[0], -q[1], -q[2], -q[3]];
}

export function quatFromAxisAngle(axis: Vec3, angle: number): Quat {
  const n = Math.hypot(axis[0], axis[1], axis[2]);
  if (n === 0) throw new Error("zero rotation axis");
  const half = angle / 2;
  const s = Math.sin(half) / n;
  return [Math.cos(half), axis[0] * s, axis[1] * s, axis[2] * s];
}

/** 3x3 rotation matrix (row-major) of a unit quaternion. */
export function quatToMatrix(q: Quat): number[][] {
  const [w, x, y, z] = q;
  return [
    [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
    [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
    [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
  ];
}

export function rotate(q: Quat, v: Vec3): Vec3 {
  const m = quatToMatrix(q);
  return [
    m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
    m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
    m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
  ];
}

/** Board-frame point into the camera frame: R p + t. */
export function applyPose(pose: Pose, p: Vec3): Vec3 {
  const r = rotate(pose.q, p);
  return [r[0] + pose.t[0], r[1] + pose.t[1], r[2] + pose.t[2]];
}

/** Optical center of the camera in board coordinates: -R^T t. */
export function cameraCenter(pose: Pose): Vec3 {
  const c = rotate(quatConjugate(pose.q), pose.t);
  return [-c[0], -c[1], -c[2]];
}

/** Radial distortion of a normalized image-plane point. */
export function distortPoint(p: Vec2, d: Distortion): Vec2 {
  const [k1, k2, k3] = d.coefficients;
  const r = Math.hypot(p[0], p[1]);
  let scale: number;
  if (d.model === "rectilinear") {
    const r2 = r * r;
    scale = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3));
  } else if (r > R_EPS) {
    const theta = Math.atan(r);
    const t2 = theta * theta;
    scale = (theta * (1.0 + t2 * (k1 + t2 * (k2 + t2 * k3)))) / r;
  } else {
    scale = 1.0; // theta/r -> 1, coefficient terms vanish with theta^2
  }
  return [p[0] * scale, p[1] * scale];
}

/** Camera-frame point (Z > 0) to pixel coordinates. */
export function projectPoint(p: Vec3, K: Intrinsics, d: Distortion): Vec2 {
  if (p[2] <= 0) throw new Error(`point behind camera (z=${p[2]})`);
  const q = distortPoint([p[0] / p[2], p[1] / p[2]], d);
  return [K.fx * q[0] + K.cx, K.fy * q[1] + K.cy];
}
