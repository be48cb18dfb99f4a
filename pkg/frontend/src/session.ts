/** Client-side session state: mirrors the server session and enforces
 * the two client invariants — never submit unless the session is
 * capturing, and keep at most one request in flight. */

import type { Api, CalibrationDto, SubmitReply, TargetDto } from "./protocol.js";
import type { CameraProfile } from "./profile.js";
import { captureObservation } from "./profile.js";
import type { Pose, Quat, Vec3 } from "./math.js";
import { NoiseGen } from "./rng.js";

export type Phase = "idle" | "capturing" | "complete" | "failed";

export interface CaptureLogEntry {
  targetIndex: number;
  status: SubmitReply["status"];
  remaining: number;
}

export function parseTargetPose(target: TargetDto): Pose {
  return {
    q: target.pose.q as Quat,
    t: target.pose.t as Vec3,
  };
}

export class ClientSession {
  phase: Phase = "idle";
  sessionId = "";
  nTargets = 0;
  target: TargetDto | null = null;
  calibration: CalibrationDto | null = null;
  log: CaptureLogEntry[] = [];
  lastError = "";

  private inflight = false;
  private readonly rng: NoiseGen;

  constructor(
    private readonly api: Api,
    readonly profile: CameraProfile,
    private readonly token: string,
  ) {
    this.rng = new NoiseGen(profile.seed);
  }

  get accepted(): number {
    return this.log.filter((e) => e.status !== "pose_mismatch").length;
  }

  async start(): Promise<void> {
    if (this.phase !== "idle") throw new Error(`cannot start from ${this.phase}`);
    const created = await this.withLock(() =>
      this.api.createSession(
        {
          camera: this.profile.camera,
          platform: this.profile.platform,
          img_size: this.profile.img_size,
          zoom: this.profile.zoom,
          distortion_model: this.profile.distortion.model,
        },
        this.token,
      ),
    );
    this.sessionId = created.session_id;
    this.nTargets = created.n_targets;
    this.phase = "capturing";
    await this.refreshTarget();
  }

  async refreshTarget(): Promise<void> {
    const body = await this.withLock(() => this.api.getTarget(this.sessionId));
    if ("status" in body && !("index" in body)) {
      this.target = null;
      if (body.status === "complete") this.phase = "complete";
      if (body.status === "failed") this.phase = "failed";
      return;
    }
    this.target = body as TargetDto;
  }

  /** Project the board under the given camera pose and submit it as the
   * capture for the current target. */
  async capture(pose: Pose): Promise<SubmitReply> {
    if (this.phase !== "capturing") {
      throw new Error(`session is ${this.phase}, not capturing`);
    }
    if (!this.target) throw new Error("no target loaded");
    const targetIndex = this.target.index;
    const obs = captureObservation(this.profile, pose, this.rng);
    const reply = await this.withLock(() =>
      this.api.submitKeypoints(this.sessionId, obs),
    );
    if (reply.status === "done") {
      this.log.push({ targetIndex, status: "done", remaining: 0 });
      this.calibration = reply.calibration;
      this.target = null;
      this.phase = "complete";
    } else {
      this.log.push({
        targetIndex,
        status: reply.status,
        remaining: reply.remaining,
      });
      if (reply.status === "need_more") await this.refreshTarget();
    }
    return reply;
  }

  private async withLock<T>(fn: () => Promise<T>): Promise<T> {
    if (this.inflight) throw new Error("request already in flight");
    this.inflight = true;
    try {
      return await fn();
    } catch (err) {
      this.lastError = err instanceof Error ? err.message : String(err);
      throw err;
    } finally {
      this.inflight = false;
    }
  }
}
