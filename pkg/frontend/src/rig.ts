/** The virtual camera the user steers. State is a board-to-camera pose;
 * controls are the usual camera moves (orbit the board, dolly along the
 * view axis, tilt/pan/roll in place, truck sideways). */

import type { Pose, Vec2, Vec3 } from "./math.js";
import {
  applyPose,
  quatFromAxisAngle,
  quatMultiply,
  quatNormalize,
  rotate,
} from "./math.js";
import type { BoardSpec } from "./board.js";
import { boardCenter, cornerArray } from "./board.js";
import type { TargetDto } from "./protocol.js";
import type { CameraProfile } from "./profile.js";
import { projectPoint } from "./math.js";

export class CameraRig {
  pose: Pose;
  private center: Vec3 = [0, 0, 0];

  constructor(start: Pose, board?: BoardSpec) {
    this.pose = { q: quatNormalize(start.q), t: [...start.t] };
    if (board) this.setPivot(board);
  }

  snapTo(pose: Pose): void {
    this.pose = { q: quatNormalize(pose.q), t: [...pose.t] };
  }

  /** Rotate the camera around the board center, about a board-frame axis
   * (x = vertical sweep, y = horizontal sweep, z = spin). */
  orbit(axis: "x" | "y" | "z", radians: number): void {
    const a: Vec3 = axis === "x" ? [1, 0, 0] : axis === "y" ? [0, 1, 0] : [0, 0, 1];
    const qa = quatFromAxisAngle(a, radians);
    const { q, t } = this.pose;
    const qNew = quatNormalize(quatMultiply(q, qa));
    const cb = this.center;
    const rc = rotate(q, cb);
    const rac = rotate(qNew, cb);
    this.pose = {
      q: qNew,
      t: [t[0] + rc[0] - rac[0], t[1] + rc[1] - rac[1], t[2] + rc[2] - rac[2]],
    };
  }

  /** Rotate the camera in place about one of its own axes
   * (x = tilt, y = pan, z = roll). */
  rotateInPlace(axis: "x" | "y" | "z", radians: number): void {
    const a: Vec3 = axis === "x" ? [1, 0, 0] : axis === "y" ? [0, 1, 0] : [0, 0, 1];
    const qu = quatFromAxisAngle(a, radians);
    const { q, t } = this.pose;
    this.pose = { q: quatNormalize(quatMultiply(qu, q)), t: rotate(qu, t) };
  }

  /** Move the camera along its own axes: +dz dollies toward the board. */
  translate(dx: number, dy: number, dz: number): void {
    const t = this.pose.t;
    this.pose = { q: this.pose.q, t: [t[0] - dx, t[1] - dy, t[2] - dz] };
  }

  /** Board center used as the orbit pivot. */
  setPivot(board: BoardSpec): void {
    this.center = boardCenter(board);
  }
}

export interface AlignmentState {
  /** mean pixel distance over target corners visible in the current view */
  mean: number;
  /** corners of the target found in the current projection */
  shared: number;
  /** total target corners */
  total: number;
  /** the server-side acceptance predicate evaluated client-side */
  reached: boolean;
}

/** Project the board under the current pose and restrict to in-frame
 * points — the same view the capture will submit (minus noise). */
export function projectForTarget(
  profile: CameraProfile,
  pose: Pose,
): Map<number, Vec2> {
  const [w, h] = profile.img_size;
  const out = new Map<number, Vec2>();
  cornerArray(profile.board).forEach((corner: Vec3, id: number) => {
    const cam = applyPose(pose, corner);
    if (cam[2] <= 0) return;
    const px = projectPoint(cam, profile.intrinsics, profile.distortion);
    if (px[0] >= 0 && px[0] < w && px[1] >= 0 && px[1] < h) out.set(id, px);
  });
  return out;
}

/** Mirror of the server's pose check: at least half the target corners
 * visible and their mean distance to the overlay within tau. */
export function alignment(
  projection: Map<number, Vec2>,
  target: TargetDto,
  tau: number,
): AlignmentState {
  const entries = Object.entries(target.corner_targets);
  let sum = 0;
  let shared = 0;
  for (const [idStr, [tx, ty]] of entries) {
    const px = projection.get(Number(idStr));
    if (!px) continue;
    shared += 1;
    sum += Math.hypot(px[0] - tx, px[1] - ty);
  }
  const mean = shared > 0 ? sum / shared : Infinity;
  const reached = shared >= 0.5 * entries.length && mean <= tau;
  return { mean, shared, total: entries.length, reached };
}
