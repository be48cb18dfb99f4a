/** HTTP driver for the calibration service. The client touches server
 * state only through these endpoints. */

import type { Observation } from "./profile.js";

export interface SessionRequest {
  camera: string;
  platform: string;
  img_size: [number, number];
  zoom: number;
  distortion_model?: string;
}

export interface TargetDto {
  index: number;
  outline_px: [number, number][];
  corner_targets: Record<string, [number, number]>;
  pose: { q: number[]; t: number[] };
}

export interface CalibrationDto {
  img_size: [number, number];
  camera_matrix: number[][];
  distortion_coefficients: number[];
  distortion_model: string;
  avg_reprojection_error: number;
}

export type SubmitReply =
  | { status: "pose_mismatch" | "need_more"; remaining: number }
  | { status: "done"; calibration: CalibrationDto };

export type QueryReply =
  | { status: 200; calibration: CalibrationDto }
  | { status: 307; location: string };

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(`HTTP ${status}: ${message}`);
  }
}

async function readJson(resp: Response): Promise<any> {
  const text = await resp.text();
  try {
    return JSON.parse(text);
  } catch {
    throw new ApiError(resp.status, `non-JSON body: ${text.slice(0, 200)}`);
  }
}

function checkCalibration(body: any): CalibrationDto {
  const required = [
    "img_size",
    "camera_matrix",
    "distortion_coefficients",
    "distortion_model",
    "avg_reprojection_error",
  ];
  for (const key of required) {
    if (!(key in body)) throw new Error(`calibration missing ${key}`);
  }
  const m = body.camera_matrix;
  if (!Array.isArray(m) || m.length !== 3 || m.some((row: any) => row.length !== 3)) {
    throw new Error("camera_matrix must be 3x3");
  }
  const [a, b, c] = m[2];
  if (a !== 0 || b !== 0 || c !== 1) {
    throw new Error(`camera_matrix bottom row must be [0,0,1], got ${m[2]}`);
  }
  return body as CalibrationDto;
}

export class Api {
  readonly serverUrl: string;

  constructor(serverUrl: string) {
    this.serverUrl = serverUrl.replace(/\/+$/, "");
  }

  private async post(path: string, body: unknown): Promise<Response> {
    return fetch(this.serverUrl + path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
      redirect: "manual",
    });
  }

  async createSession(
    req: SessionRequest,
    token: string,
  ): Promise<{ session_id: string; n_targets: number }> {
    const resp = await this.post("/api/v1/sessions", { ...req, token });
    const body = await readJson(resp);
    if (resp.status !== 201) throw new ApiError(resp.status, body.error ?? "create failed");
    return body;
  }

  async getTarget(sessionId: string): Promise<TargetDto | { status: string }> {
    const resp = await fetch(`${this.serverUrl}/api/v1/sessions/${sessionId}/target`);
    const body = await readJson(resp);
    if (resp.status !== 200) throw new ApiError(resp.status, body.error ?? "target failed");
    return body;
  }

  async submitKeypoints(sessionId: string, obs: Observation): Promise<SubmitReply> {
    const resp = await this.post(`/api/v1/sessions/${sessionId}/keypoints`, {
      points: obs.points.map((p) => ({ id: p.id, pixel: [p.pixel[0], p.pixel[1]] })),
      img_size: obs.img_size,
    });
    const body = await readJson(resp);
    if (resp.status !== 200) throw new ApiError(resp.status, body.error ?? "submit failed");
    if (body.status === "done") {
      checkCalibration(body.calibration);
    }
    return body;
  }

  async query(req: SessionRequest): Promise<QueryReply> {
    const resp = await this.post("/api/v1/calibrations/query", req);
    // fetch() surfaces a manual redirect as an opaque status 0 response in
    // browsers but keeps the real status under node; handle both.
    if (resp.status === 307 || resp.type === "opaqueredirect") {
      return { status: 307, location: resp.headers.get("location") ?? "" };
    }
    const body = await readJson(resp);
    if (resp.status !== 200) throw new ApiError(resp.status, body.error ?? "query failed");
    return { status: 200, calibration: checkCalibration(body) };
  }
}
