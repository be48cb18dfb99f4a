import type { Distortion, Intrinsics, Pose, Vec2 } from "./math.js";
import { applyPose, projectPoint } from "./math.js";
import type { BoardSpec } from "./board.js";
import { cornerArray, DEFAULT_BOARD } from "./board.js";
import { NoiseGen } from "./rng.js";

/** Ground truth of the virtual camera the user steers. The server never
 * sees these numbers — only the keypoints they produce. */
export interface CameraProfile {
  camera: string;
  platform: string;
  img_size: [number, number];
  zoom: number;
  intrinsics: Intrinsics;
  distortion: Distortion;
  noise_sigma: number;
  seed: number;
  board: BoardSpec;
}

export const DEFAULT_PROFILE: CameraProfile = {
  camera: "C922 Pro Stream Webcam (046d:085c)",
  platform: "X11; Linux x86_64",
  img_size: [1280, 720],
  zoom: 0,
  intrinsics: { fx: 1430, fy: 1430, cx: 952, cy: 505 },
  distortion: { model: "rectilinear", coefficients: [-0.1, 0.02, 0] },
  noise_sigma: 0.2,
  seed: 0,
  board: DEFAULT_BOARD,
};

export interface ObservationPoint {
  id: number;
  pixel: Vec2;
}

export interface Observation {
  points: ObservationPoint[];
  img_size: [number, number];
}

/** What the virtual camera "detects" at a pose: every board corner in
 * front of the camera whose (optionally noisy) projection lands in
 * frame. */
export function captureObservation(
  profile: CameraProfile,
  pose: Pose,
  rng?: NoiseGen,
): Observation {
  const [w, h] = profile.img_size;
  const points: ObservationPoint[] = [];
  cornerArray(profile.board).forEach((corner, id) => {
    const cam = applyPose(pose, corner);
    if (cam[2] <= 0) return;
    const px = projectPoint(cam, profile.intrinsics, profile.distortion);
    if (rng && profile.noise_sigma > 0) {
      px[0] += profile.noise_sigma * rng.normal();
      px[1] += profile.noise_sigma * rng.normal();
    }
    if (px[0] >= 0 && px[0] < w && px[1] >= 0 && px[1] < h) {
      points.push({ id, pixel: px });
    }
  });
  return { points, img_size: [w, h] };
}
