/** Scripted steering: the automated stand-in for a human on the mouse.
 * Greedy coordinate descent over the rig's control moves on the same
 * mean-corner-distance readout the indicator shows, until the server's
 * acceptance predicate would fire. */

import type { CameraProfile } from "./profile.js";
import type { TargetDto } from "./protocol.js";
import { alignment, CameraRig, projectForTarget } from "./rig.js";
import type { ClientSession } from "./session.js";

interface Move {
  kind: "rotation" | "translation";
  apply(rig: CameraRig, scale: number): void;
}

const MOVES: Move[] = [];
for (const sign of [1, -1]) {
  for (const axis of ["x", "y", "z"] as const) {
    MOVES.push({ kind: "rotation", apply: (rig, s) => rig.orbit(axis, sign * s) });
    MOVES.push({ kind: "rotation", apply: (rig, s) => rig.rotateInPlace(axis, sign * s) });
  }
  MOVES.push({ kind: "translation", apply: (rig, s) => rig.translate(sign * s, 0, 0) });
  MOVES.push({ kind: "translation", apply: (rig, s) => rig.translate(0, sign * s, 0) });
  MOVES.push({ kind: "translation", apply: (rig, s) => rig.translate(0, 0, sign * s) });
}

/** Objective: mean distance to the overlay over all target corners, with
 * out-of-view corners charged a full image diagonal so visibility is
 * part of the cost. */
function cost(profile: CameraProfile, rig: CameraRig, target: TargetDto): number {
  const [w, h] = profile.img_size;
  const penalty = Math.hypot(w, h);
  const projection = projectForTarget(profile, rig.pose);
  const entries = Object.entries(target.corner_targets);
  if (entries.length === 0) return penalty;
  let sum = 0;
  for (const [idStr, [tx, ty]] of entries) {
    const px = projection.get(Number(idStr));
    sum += px ? Math.hypot(px[0] - tx, px[1] - ty) : penalty;
  }
  return sum / entries.length;
}

export interface DriveOptions {
  /** stop early once the mean distance is this fraction of tau */
  margin?: number;
  maxIterations?: number;
}

/** Steer the rig to the target with control moves only. Returns the
 * number of descent iterations, or -1 if it stalled short of the
 * acceptance predicate. The margin is a comfort goal: descent keeps
 * going below it when it can, but a stall anywhere inside tau counts
 * as aligned — the overlay is drawn for the server's focal-length
 * guess, so a true camera can rarely match it pixel-perfect. */
export function driveToTarget(
  rig: CameraRig,
  target: TargetDto,
  profile: CameraProfile,
  tau: number,
  opts: DriveOptions = {},
): number {
  const margin = opts.margin ?? 0.3;
  const maxIterations = opts.maxIterations ?? 400;
  let rotStep = 0.3; // rad
  let transStep = 0.15; // m
  let best = cost(profile, rig, target);

  const state = () => alignment(projectForTarget(profile, rig.pose), target, tau);

  for (let iter = 0; iter < maxIterations; iter++) {
    const s = state();
    if (s.reached && s.mean <= margin * tau) return iter;
    let improved = false;
    for (const move of MOVES) {
      const saved: typeof rig.pose = { q: [...rig.pose.q], t: [...rig.pose.t] };
      move.apply(rig, move.kind === "rotation" ? rotStep : transStep);
      const c = cost(profile, rig, target);
      if (c < best - 1e-12) {
        best = c;
        improved = true;
      } else {
        rig.pose = saved;
      }
    }
    if (!improved) {
      rotStep /= 2;
      transStep /= 2;
      if (rotStep < 1e-7 && transStep < 1e-7) {
        return state().reached ? iter : -1;
      }
    }
  }
  return state().reached ? maxIterations : -1;
}

export interface ScriptedResult {
  captures: number;
  mismatches: number;
  iterations: number[];
}

/** Complete a whole session by steering to every target and capturing.
 * The session must already be started. */
export async function runScriptedSession(
  session: ClientSession,
  rig: CameraRig,
  opts: DriveOptions = {},
): Promise<ScriptedResult> {
  const result: ScriptedResult = { captures: 0, mismatches: 0, iterations: [] };
  const guard = 4 * session.nTargets + 8;
  let submissions = 0;
  while (session.phase === "capturing") {
    if (++submissions > guard) throw new Error("no progress toward completion");
    const target = session.target;
    if (!target) throw new Error("capturing but no target loaded");
    const iters = driveToTarget(rig, target, session.profile, tauFor(session), opts);
    if (iters < 0) {
      throw new Error(`could not align to target ${target.index}`);
    }
    result.iterations.push(iters);
    const reply = await session.capture(rig.pose);
    if (reply.status === "pose_mismatch") result.mismatches += 1;
    else result.captures += 1;
  }
  return result;
}

/** The client does not know the server's tau; assume the default scaling
 * (20 px at 720p) and keep a safety margin when steering. */
export function tauFor(session: ClientSession): number {
  return 20 * (session.profile.img_size[1] / 720);
}
