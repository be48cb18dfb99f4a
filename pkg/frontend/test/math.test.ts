import { describe, expect, it } from "vitest";

import type { Distortion, Pose, Quat, Vec3 } from "../src/math.js";
import {
  applyPose,
  cameraCenter,
  distortPoint,
  projectPoint,
  quatFromAxisAngle,
  quatMultiply,
  quatNormalize,
  quatToMatrix,
  rotate,
} from "../src/math.js";
import { cornerArray, DEFAULT_BOARD } from "../src/board.js";
import { CameraRig, alignment, projectForTarget } from "../src/rig.js";
import { DEFAULT_PROFILE } from "../src/profile.js";
import { NoiseGen } from "../src/rng.js";

const K = { fx: 1430, fy: 1430, cx: 952, cy: 505 };
const NO_DIST: Distortion = { model: "rectilinear", coefficients: [0, 0, 0] };

function close(a: number, b: number, tol = 1e-12): void {
  expect(Math.abs(a - b)).toBeLessThanOrEqual(tol);
}

describe("quaternions", () => {
  it("rotates x into y for a 90 deg turn about z", () => {
    const q = quatFromAxisAngle([0, 0, 1], Math.PI / 2);
    const v = rotate(q, [1, 0, 0]);
    close(v[0], 0);
    close(v[1], 1);
    close(v[2], 0);
  });

  it("multiplication composes rotations", () => {
    const qa = quatFromAxisAngle([0, 0, 1], 0.4);
    const qb = quatFromAxisAngle([1, 0, 0], -0.7);
    const v: Vec3 = [0.3, -0.2, 0.9];
    const composed = rotate(quatMultiply(qa, qb), v);
    const stepwise = rotate(qa, rotate(qb, v));
    for (let i = 0; i < 3; i++) close(composed[i], stepwise[i]);
  });

  it("normalization flips the sign to keep w >= 0", () => {
    const q = quatNormalize([-0.5, 0.5, 0.5, 0.5]);
    expect(q[0]).toBeGreaterThan(0);
    close(Math.hypot(...q), 1);
  });

  it("matrix of the identity quaternion is the identity", () => {
    const m = quatToMatrix([1, 0, 0, 0]);
    expect(m).toEqual([
      [1, 0, 0],
      [0, 1, 0],
      [0, 0, 1],
    ]);
  });
});

describe("poses", () => {
  const pose: Pose = {
    q: quatFromAxisAngle([0, 1, 0], 0.3),
    t: [0.05, -0.1, 0.8],
  };

  it("applyPose is R p + t", () => {
    const p: Vec3 = [0.1, 0.2, 0];
    const viaMatrix = quatToMatrix(pose.q);
    const expected = [0, 1, 2].map(
      (r) =>
        viaMatrix[r][0] * p[0] +
        viaMatrix[r][1] * p[1] +
        viaMatrix[r][2] * p[2] +
        pose.t[r],
    );
    const got = applyPose(pose, p);
    for (let i = 0; i < 3; i++) close(got[i], expected[i]);
  });

  it("camera center maps back to -t", () => {
    const c = cameraCenter(pose);
    const back = applyPose(pose, c);
    for (let i = 0; i < 3; i++) close(back[i], 0);
  });
});

describe("distortion and projection", () => {
  it("rectilinear matches the polynomial", () => {
    const d: Distortion = { model: "rectilinear", coefficients: [-0.1, 0.02, 0.004] };
    const p: [number, number] = [0.3, -0.4];
    const r2 = 0.25;
    const scale = 1 + r2 * (-0.1 + r2 * (0.02 + r2 * 0.004));
    const q = distortPoint(p, d);
    close(q[0], 0.3 * scale);
    close(q[1], -0.4 * scale);
  });

  it("fisheye is continuous through r = 0", () => {
    const d: Distortion = { model: "fisheye", coefficients: [0.05, -0.01, 0.002] };
    const tiny = distortPoint([1e-9, 0], d);
    close(tiny[0], 1e-9, 1e-18);
    const small = distortPoint([1e-7, 0], d);
    close(small[0] / 1e-7, 1, 1e-9);
  });

  it("projection puts the axis point at the principal point", () => {
    const px = projectPoint([0, 0, 2], K, NO_DIST);
    close(px[0], 952);
    close(px[1], 505);
  });

  it("rejects points behind the camera", () => {
    expect(() => projectPoint([0, 0, -1], K, NO_DIST)).toThrow(/behind/);
    expect(() => projectPoint([0, 0, 0], K, NO_DIST)).toThrow(/behind/);
  });

  it("depends only on the ray", () => {
    const d: Distortion = { model: "fisheye", coefficients: [0.05, -0.01, 0.002] };
    const a = projectPoint([0.2, -0.1, 0.9], K, d);
    const b = projectPoint([0.2 * 3.7, -0.1 * 3.7, 0.9 * 3.7], K, d);
    close(a[0], b[0], 1e-9);
    close(a[1], b[1], 1e-9);
  });
});

describe("board", () => {
  it("default board has 28 interior corners at square spacing", () => {
    const corners = cornerArray(DEFAULT_BOARD);
    expect(corners).toHaveLength(28);
    expect(corners[0]).toEqual([0.03, 0.03, 0]);
    expect(corners[7]).toEqual([0.03, 0.06, 0]); // next row, row-major ids
    expect(corners[27]).toEqual([0.21, 0.12, 0]);
  });
});

describe("camera rig", () => {
  const start: Pose = { q: [1, 0, 0, 0], t: [-0.12, -0.075, 0.5] };

  it("orbit keeps the distance to the board center", () => {
    const rig = new CameraRig(start, DEFAULT_BOARD);
    const center: Vec3 = [0.12, 0.075, 0];
    const dist = (p: Pose) => {
      const c = cameraCenter(p);
      return Math.hypot(c[0] - center[0], c[1] - center[1], c[2] - center[2]);
    };
    const before = dist(rig.pose);
    rig.orbit("x", 0.5);
    rig.orbit("y", -0.8);
    close(dist(rig.pose), before, 1e-9);
  });

  it("orbit keeps the board center's pixel fixed", () => {
    const rig = new CameraRig(start, DEFAULT_BOARD);
    const at = () =>
      projectPoint(applyPose(rig.pose, [0.12, 0.075, 0]), K, NO_DIST);
    const before = at();
    rig.orbit("y", 0.4);
    const after = at();
    close(after[0], before[0], 1e-6);
    close(after[1], before[1], 1e-6);
  });

  it("rotate-in-place keeps the camera center fixed", () => {
    const rig = new CameraRig(start, DEFAULT_BOARD);
    const before = cameraCenter(rig.pose);
    rig.rotateInPlace("x", 0.3);
    rig.rotateInPlace("z", -0.2);
    const after = cameraCenter(rig.pose);
    for (let i = 0; i < 3; i++) close(after[i], before[i], 1e-12);
  });

  it("dolly moves straight along the view axis", () => {
    const rig = new CameraRig(start, DEFAULT_BOARD);
    rig.translate(0, 0, 0.2);
    close(rig.pose.t[2], 0.3);
    close(rig.pose.t[0], start.t[0]);
  });

  it("snap lands exactly on the target pose", () => {
    const rig = new CameraRig(start, DEFAULT_BOARD);
    const target: Pose = {
      q: quatNormalize([0.9, 0.1, -0.2, 0.05] as Quat),
      t: [0.01, 0.02, 0.7],
    };
    rig.snapTo(target);
    expect(rig.pose.t).toEqual(target.t);
    for (let i = 0; i < 4; i++) close(rig.pose.q[i], target.q[i]);
  });
});

describe("alignment metric", () => {
  const profile = { ...DEFAULT_PROFILE, noise_sigma: 0 };
  const pose: Pose = { q: [1, 0, 0, 0], t: [-0.12, -0.075, 0.5] };

  it("is zero against a target generated from the same pose", () => {
    const projection = projectForTarget(profile, pose);
    const cornerTargets: Record<string, [number, number]> = {};
    for (const [id, px] of projection) cornerTargets[String(id)] = [px[0], px[1]];
    const state = alignment(projection, {
      index: 0,
      outline_px: [],
      corner_targets: cornerTargets,
      pose: { q: [...pose.q], t: [...pose.t] },
    }, 20);
    expect(state.reached).toBe(true);
    close(state.mean, 0);
    expect(state.shared).toBe(state.total);
  });

  it("fails when most corners are missing", () => {
    const projection = projectForTarget(profile, pose);
    const cornerTargets: Record<string, [number, number]> = {};
    for (const [id, px] of projection) cornerTargets[String(id)] = [px[0], px[1]];
    // keep only a third of the projection visible
    const kept = new Map([...projection].slice(0, Math.floor(projection.size / 3)));
    const state = alignment(kept, {
      index: 0,
      outline_px: [],
      corner_targets: cornerTargets,
      pose: { q: [...pose.q], t: [...pose.t] },
    }, 20);
    expect(state.reached).toBe(false);
  });
});

describe("noise generator", () => {
  it("is deterministic per seed and roughly standard normal", () => {
    const a = new NoiseGen(42);
    const b = new NoiseGen(42);
    const xs = Array.from({ length: 4000 }, () => a.normal());
    expect(b.normal()).toBe(xs[0]);
    const mean = xs.reduce((s, v) => s + v, 0) / xs.length;
    const varc = xs.reduce((s, v) => s + (v - mean) ** 2, 0) / xs.length;
    expect(Math.abs(mean)).toBeLessThan(0.1);
    expect(Math.abs(varc - 1)).toBeLessThan(0.15);
  });
});
