/**
 * Orthographic skeleton rendering onto a minimal 2D-context interface.
 *
 * World space is y-up; the camera is a yaw/pitch orbit with a uniform
 * scale (pixels per meter), no perspective. Rendering reads the frame
 * under the playback cursor and draws a ground grid plus one colored
 * stick figure per agent; nothing is interpolated or extrapolated.
 */

import { ViewState } from "./state.js";

/** The canvas operations the renderer needs; CanvasRenderingContext2D satisfies it. */
export interface Draw2D {
  clearRect(x: number, y: number, w: number, h: number): void;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  stroke(): void;
  fill(): void;
  strokeStyle: string;
  fillStyle: string;
  lineWidth: number;
  globalAlpha: number;
}

export interface Camera {
  /** Orbit angle around the world y axis, radians. */
  yaw: number;
  /** Tilt toward the ground plane, radians. */
  pitch: number;
  /** Pixels per world meter. */
  scale: number;
  /** World-space look-at point. */
  center: [number, number, number];
}

export const DEFAULT_CAMERA: Camera = {
  yaw: Math.PI / 6,
  pitch: Math.PI / 8,
  scale: 120,
  center: [0, 0.9, 0],
};

/** Bones of the 8-joint skeleton: root, hips, feet, chest, hands. */
export const SKELETON_EDGES: ReadonlyArray<readonly [number, number]> = [
  [0, 1],
  [0, 2],
  [1, 3],
  [2, 4],
  [0, 5],
  [5, 6],
  [5, 7],
];

export interface Projected {
  x: number;
  y: number;
  /** View-space depth, larger = farther; kept for draw ordering. */
  depth: number;
}

export function project(
  p: ReadonlyArray<number>,
  cam: Camera,
  width: number,
  height: number
): Projected {
  const dx = p[0] - cam.center[0];
  const dy = p[1] - cam.center[1];
  const dz = p[2] - cam.center[2];
  const cy = Math.cos(cam.yaw);
  const sy = Math.sin(cam.yaw);
  // yaw about +y, then pitch about +x, orthographic drop of view z
  const x1 = cy * dx - sy * dz;
  const z1 = sy * dx + cy * dz;
  const cp = Math.cos(cam.pitch);
  const sp = Math.sin(cam.pitch);
  const y2 = cp * dy - sp * z1;
  const z2 = sp * dy + cp * z1;
  return {
    x: width / 2 + cam.scale * x1,
    y: height / 2 - cam.scale * y2,
    depth: z2,
  };
}

export const GRID_COLOR = "#2e3440";
export const GRID_EXTENT = 3;

export function drawGrid(ctx: Draw2D, cam: Camera, width: number, height: number): void {
  ctx.strokeStyle = GRID_COLOR;
  ctx.lineWidth = 1;
  ctx.globalAlpha = 0.8;
  for (let i = -GRID_EXTENT; i <= GRID_EXTENT; i++) {
    const a = project([i, 0, -GRID_EXTENT], cam, width, height);
    const b = project([i, 0, GRID_EXTENT], cam, width, height);
    ctx.beginPath();
    ctx.moveTo(a.x, a.y);
    ctx.lineTo(b.x, b.y);
    ctx.stroke();
    const c = project([-GRID_EXTENT, 0, i], cam, width, height);
    const d = project([GRID_EXTENT, 0, i], cam, width, height);
    ctx.beginPath();
    ctx.moveTo(c.x, c.y);
    ctx.lineTo(d.x, d.y);
    ctx.stroke();
  }
  ctx.globalAlpha = 1;
}

export function drawSkeleton(
  ctx: Draw2D,
  joints: ReadonlyArray<ReadonlyArray<number>>,
  color: string,
  cam: Camera,
  width: number,
  height: number
): void {
  const pts = joints.map((j) => project(j, cam, width, height));
  ctx.strokeStyle = color;
  ctx.fillStyle = color;
  ctx.lineWidth = 2;
  for (const [a, b] of SKELETON_EDGES) {
    if (a >= pts.length || b >= pts.length) continue;
    ctx.beginPath();
    ctx.moveTo(pts[a].x, pts[a].y);
    ctx.lineTo(pts[b].x, pts[b].y);
    ctx.stroke();
  }
  for (const p of pts) {
    ctx.beginPath();
    ctx.arc(p.x, p.y, 3, 0, 2 * Math.PI);
    ctx.fill();
  }
}

/** Draw the frame under the cursor: grid first, then every active lane. */
export function drawScene(
  ctx: Draw2D,
  state: ViewState,
  cam: Camera,
  width: number,
  height: number
): string[] {
  ctx.clearRect(0, 0, width, height);
  drawGrid(ctx, cam, width, height);
  const drawn: string[] = [];
  for (const [id, joints] of state.frameAtCursor()) {
    const lane = state.lanes.get(id);
    if (!lane) continue;
    drawSkeleton(ctx, joints, lane.color, cam, width, height);
    drawn.push(id);
  }
  return drawn;
}
