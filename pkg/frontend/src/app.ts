/** Browser wiring: canvas, mouse/keyboard camera controls, session and
 * calibration panels. Configuration comes from URL query params
 * (?server=...&token=...). */

import type { Pose, Vec2, Vec3 } from "./math.js";
import { applyPose, projectPoint } from "./math.js";
import { boardCenter } from "./board.js";
import type { CameraProfile } from "./profile.js";
import { DEFAULT_PROFILE } from "./profile.js";
import { Api } from "./protocol.js";
import { alignment, CameraRig, projectForTarget } from "./rig.js";
import { ClientSession, parseTargetPose } from "./session.js";
import { formatCalibration, renderOverlay } from "./overlay.js";
import { driveToTarget, tauFor } from "./controller.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function homePose(profile: CameraProfile): Pose {
  // fronto-parallel view of the whole board from 0.5 m
  const c = boardCenter(profile.board);
  return { q: [1, 0, 0, 0], t: [-c[0], -c[1], 0.5] };
}

function readProfileForm(): CameraProfile {
  const num = (id: string) => Number(el<HTMLInputElement>(id).value);
  return {
    ...DEFAULT_PROFILE,
    intrinsics: { fx: num("fx"), fy: num("fy"), cx: num("cx"), cy: num("cy") },
    distortion: {
      model: el<HTMLSelectElement>("model").value as "rectilinear" | "fisheye",
      coefficients: [num("k1"), num("k2"), num("k3")],
    },
    noise_sigma: num("noise"),
  };
}

function drawBoard(
  ctx: CanvasRenderingContext2D,
  profile: CameraProfile,
  pose: Pose,
): void {
  const { board } = profile;
  const s = board.square_length;
  const square = (i: number, j: number): Vec2[] | null => {
    const quad: Vec2[] = [];
    for (const [dx, dy] of [
      [0, 0],
      [1, 0],
      [1, 1],
      [0, 1],
    ]) {
      const p: Vec3 = [(j + dx) * s, (i + dy) * s, 0];
      const cam = applyPose(pose, p);
      if (cam[2] <= 0) return null;
      quad.push(projectPoint(cam, profile.intrinsics, profile.distortion));
    }
    return quad;
  };
  for (let i = 0; i < board.squares_y; i++) {
    for (let j = 0; j < board.squares_x; j++) {
      const quad = square(i, j);
      if (!quad) continue;
      ctx.fillStyle = (i + j) % 2 === 0 ? "#222" : "#ddd";
      ctx.beginPath();
      ctx.moveTo(quad[0][0], quad[0][1]);
      for (let k = 1; k < 4; k++) ctx.lineTo(quad[k][0], quad[k][1]);
      ctx.closePath();
      ctx.fill();
    }
  }
}

function main(): void {
  const params = new URLSearchParams(window.location.search);
  const server = params.get("server") ?? window.location.origin;
  const token = params.get("token") ?? "";

  const canvas = el<HTMLCanvasElement>("view");
  const ctx = canvas.getContext("2d");
  if (!ctx) throw new Error("no 2d context");
  const statusEl = el<HTMLElement>("status");
  const calibEl = el<HTMLElement>("calibration");

  let profile = readProfileForm();
  canvas.width = profile.img_size[0];
  canvas.height = profile.img_size[1];
  let rig = new CameraRig(homePose(profile), profile.board);
  let session: ClientSession | null = null;
  let busy = false;

  const describe = (): string => {
    if (!session) return "no session — press Start";
    if (session.phase === "complete") return "session complete";
    if (session.phase === "failed") return "session failed";
    const total = session.nTargets;
    return `target ${session.target ? session.target.index + 1 : "?"}/${total} — ` +
      `${session.accepted} accepted, ${session.log.length - session.accepted} mismatched`;
  };

  const showCalibration = (): void => {
    const c = session?.calibration;
    if (!c) return;
    calibEl.textContent = formatCalibration(c);
  };

  const render = (): void => {
    ctx.fillStyle = "#404850";
    ctx.fillRect(0, 0, canvas.width, canvas.height);
    drawBoard(ctx, profile, rig.pose);
    if (session?.target) {
      const tau = tauFor(session);
      const projection = projectForTarget(profile, rig.pose);
      const state = alignment(projection, session.target, tau);
      renderOverlay(ctx, session.target, projection, state, tau);
    }
    statusEl.textContent = session?.lastError
      ? `${describe()} — last error: ${session.lastError}`
      : describe();
    requestAnimationFrame(render);
  };

  const guard = async (fn: () => Promise<void>): Promise<void> => {
    if (busy) return;
    busy = true;
    try {
      await fn();
    } catch {
      // surfaced via session.lastError in the status line
    } finally {
      busy = false;
    }
  };

  el<HTMLButtonElement>("start").onclick = () =>
    guard(async () => {
      profile = readProfileForm();
      rig = new CameraRig(homePose(profile), profile.board);
      calibEl.textContent = "";
      session = new ClientSession(new Api(server), profile, token);
      await session.start();
    });

  el<HTMLButtonElement>("capture").onclick = () =>
    guard(async () => {
      if (!session) return;
      await session.capture(rig.pose);
      showCalibration();
    });

  el<HTMLButtonElement>("snap").onclick = () => {
    if (session?.target) rig.snapTo(parseTargetPose(session.target));
  };

  el<HTMLButtonElement>("auto").onclick = () =>
    guard(async () => {
      if (!session?.target) return;
      driveToTarget(rig, session.target, profile, tauFor(session));
      await session.capture(rig.pose);
      showCalibration();
    });

  let dragging = false;
  let last: Vec2 = [0, 0];
  canvas.onmousedown = (ev) => {
    dragging = true;
    last = [ev.offsetX, ev.offsetY];
  };
  window.onmouseup = () => {
    dragging = false;
  };
  canvas.onmousemove = (ev) => {
    if (!dragging) return;
    const dx = ev.offsetX - last[0];
    const dy = ev.offsetY - last[1];
    last = [ev.offsetX, ev.offsetY];
    if (ev.shiftKey) {
      rig.translate(-dx * 0.001, -dy * 0.001, 0);
    } else {
      rig.orbit("y", dx * 0.005);
      rig.orbit("x", -dy * 0.005);
    }
  };
  canvas.onwheel = (ev) => {
    ev.preventDefault();
    rig.translate(0, 0, ev.deltaY * -0.0005);
  };
  window.onkeydown = (ev) => {
    const step = 0.03;
    switch (ev.key) {
      case "q":
        rig.rotateInPlace("z", step);
        break;
      case "e":
        rig.rotateInPlace("z", -step);
        break;
      case "ArrowUp":
        rig.rotateInPlace("x", -step);
        break;
      case "ArrowDown":
        rig.rotateInPlace("x", step);
        break;
      case "ArrowLeft":
        rig.rotateInPlace("y", -step);
        break;
      case "ArrowRight":
        rig.rotateInPlace("y", step);
        break;
      case " ":
        el<HTMLButtonElement>("capture").click();
        break;
    }
  };

  render();
}

window.addEventListener("DOMContentLoaded", main);
