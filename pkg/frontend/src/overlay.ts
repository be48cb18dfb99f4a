/** Overlay drawing. Takes a minimal 2D-context surface so tests can
 * record the calls without a browser canvas. */

import type { Vec2 } from "./math.js";
import type { CalibrationDto, TargetDto } from "./protocol.js";
import type { AlignmentState } from "./rig.js";

export interface DrawContext {
  strokeStyle: unknown;
  fillStyle: unknown;
  lineWidth: number;
  font: string;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  closePath(): void;
  stroke(): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  fill(): void;
  fillText(text: string, x: number, y: number): void;
}

export const TARGET_STYLE = "#35c462";
export const CURRENT_STYLE = "#e0e0e0";
export const ALIGNED_STYLE = "#35c462";
export const OFF_STYLE = "#e05555";

/** Draw the server's target outline exactly as sent. */
export function drawTargetOutline(ctx: DrawContext, target: TargetDto): void {
  const pts = target.outline_px;
  if (pts.length === 0) return;
  ctx.strokeStyle = TARGET_STYLE;
  ctx.lineWidth = 2;
  ctx.beginPath();
  ctx.moveTo(pts[0][0], pts[0][1]);
  for (let i = 1; i < pts.length; i++) ctx.lineTo(pts[i][0], pts[i][1]);
  ctx.closePath();
  ctx.stroke();
}

export function drawCornerDots(
  ctx: DrawContext,
  points: Iterable<Vec2>,
  style: string,
  radius = 3,
): void {
  ctx.fillStyle = style;
  for (const [x, y] of points) {
    ctx.beginPath();
    ctx.arc(x, y, radius, 0, 2 * Math.PI);
    ctx.fill();
  }
}

/** Proximity readout: the same mean-corner-distance the server gates on. */
export function drawIndicator(
  ctx: DrawContext,
  state: AlignmentState,
  tau: number,
  at: Vec2 = [12, 24],
): void {
  ctx.font = "16px monospace";
  ctx.fillStyle = state.reached ? ALIGNED_STYLE : OFF_STYLE;
  const text = state.reached
    ? `aligned (${state.mean.toFixed(1)} px <= ${tau.toFixed(0)})`
    : state.shared < 0.5 * state.total
      ? `board out of view (${state.shared}/${state.total} corners)`
      : `off by ${state.mean.toFixed(1)} px (tau ${tau.toFixed(0)})`;
  ctx.fillText(text, at[0], at[1]);
}

export function renderOverlay(
  ctx: DrawContext,
  target: TargetDto,
  projection: Map<number, Vec2>,
  state: AlignmentState,
  tau: number,
): void {
  drawTargetOutline(ctx, target);
  drawCornerDots(
    ctx,
    Object.values(target.corner_targets) as Vec2[],
    TARGET_STYLE,
    2,
  );
  drawCornerDots(ctx, projection.values(), CURRENT_STYLE, 3);
  drawIndicator(ctx, state, tau);
}

/** The text shown in the calibration panel once a session completes. */
export function formatCalibration(c: CalibrationDto): string {
  const m = c.camera_matrix;
  return [
    "camera_matrix:",
    ...m.map((row) => "  [" + row.map((v) => v.toFixed(3)).join(", ") + "]"),
    `distortion (${c.distortion_model}): ` +
      c.distortion_coefficients.map((v) => v.toFixed(5)).join(", "),
    `avg reprojection error: ${c.avg_reprojection_error.toFixed(4)} px`,
  ].join("\n");
}
