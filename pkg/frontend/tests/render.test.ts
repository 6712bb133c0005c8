import { describe, expect, it } from "vitest";

import {
  DEFAULT_CAMERA,
  Draw2D,
  GRID_COLOR,
  SKELETON_EDGES,
  drawScene,
  project,
} from "../src/render.js";
import { ViewState } from "../src/state.js";

const W = 800;
const H = 600;

/** Records every drawing operation with the style active at call time. */
class RecordingCtx implements Draw2D {
  strokeStyle = "";
  fillStyle = "";
  lineWidth = 0;
  globalAlpha = 1;
  ops: Array<{ op: string; style: string; args: number[] }> = [];

  clearRect(...args: number[]): void {
    this.ops.push({ op: "clearRect", style: "", args });
  }
  beginPath(): void {
    this.ops.push({ op: "beginPath", style: "", args: [] });
  }
  moveTo(...args: number[]): void {
    this.ops.push({ op: "moveTo", style: this.strokeStyle, args });
  }
  lineTo(...args: number[]): void {
    this.ops.push({ op: "lineTo", style: this.strokeStyle, args });
  }
  arc(...args: number[]): void {
    this.ops.push({ op: "arc", style: this.fillStyle, args });
  }
  stroke(): void {
    this.ops.push({ op: "stroke", style: this.strokeStyle, args: [] });
  }
  fill(): void {
    this.ops.push({ op: "fill", style: this.fillStyle, args: [] });
  }
}

function stateWithFrame(): ViewState {
  const s = new ViewState();
  s.apply({
    type: "session",
    session_id: "s",
    h: 4,
    k: 2,
    fps: 20,
    agents: ["agent-0", "agent-1"],
    total_frames: null,
  });
  const pose = [
    [0, 0.9, 0],
    [0.1, 0.85, 0],
    [-0.1, 0.85, 0],
    [0.1, 0.05, 0],
    [-0.1, 0.05, 0],
    [0, 1.35, 0],
    [0.25, 0.75, 0.05],
    [-0.25, 0.75, 0.05],
  ];
  s.apply({
    type: "frames",
    window_index: 0,
    agents: [
      { id: "agent-0", joints: [pose, pose] },
      { id: "agent-1", joints: [pose.map((j) => [j[0] + 1, j[1], j[2]]), pose] },
    ],
  });
  return s;
}

describe("orthographic projection", () => {
  it("is centered and scales linearly with no perspective division", () => {
    const cam = { yaw: 0, pitch: 0, scale: 100, center: [0, 0, 0] as [number, number, number] };
    const origin = project([0, 0, 0], cam, W, H);
    expect(origin.x).toBe(W / 2);
    expect(origin.y).toBe(H / 2);
    // depth must not change screen position under orthography
    const near = project([0.5, 0.2, 0.1], cam, W, H);
    const far = project([0.5, 0.2, 5.0], cam, W, H);
    expect(near.x).toBe(far.x);
    expect(near.y).toBe(far.y);
    expect(far.depth).toBeGreaterThan(near.depth);
  });

  it("maps +y up on screen (decreasing pixel y)", () => {
    const up = project([0, 1, 0], DEFAULT_CAMERA, W, H);
    const down = project([0, 0, 0], DEFAULT_CAMERA, W, H);
    expect(up.y).toBeLessThan(down.y);
  });

  it("doubles pixel offsets when scale doubles", () => {
    const cam1 = { ...DEFAULT_CAMERA, scale: 50 };
    const cam2 = { ...DEFAULT_CAMERA, scale: 100 };
    const p1 = project([1, 0.5, -0.3], cam1, W, H);
    const p2 = project([1, 0.5, -0.3], cam2, W, H);
    expect(p2.x - W / 2).toBeCloseTo(2 * (p1.x - W / 2), 10);
    expect(p2.y - H / 2).toBeCloseTo(2 * (p1.y - H / 2), 10);
  });
});

describe("scene drawing", () => {
  it("clears, draws the ground grid, then one figure per active agent", () => {
    const s = stateWithFrame();
    const ctx = new RecordingCtx();
    const drawn = drawScene(ctx, s, DEFAULT_CAMERA, W, H);
    expect(drawn).toEqual(["agent-0", "agent-1"]);
    expect(ctx.ops[0].op).toBe("clearRect");
    expect(ctx.ops.some((o) => o.op === "stroke" && o.style === GRID_COLOR)).toBe(true);
    const colors = new Set(
      ctx.ops.filter((o) => o.op === "stroke" && o.style !== GRID_COLOR).map((o) => o.style)
    );
    expect(colors.size).toBe(2);
    // every bone of both skeletons got a stroked segment
    const boneStrokes = ctx.ops.filter((o) => o.op === "stroke" && o.style !== GRID_COLOR);
    expect(boneStrokes.length).toBe(2 * SKELETON_EDGES.length);
  });

  it("draws nothing for lanes that have not started yet", () => {
    const s = stateWithFrame();
    s.apply({
      type: "frames",
      window_index: 1,
      agents: [
        { id: "agent-0", joints: [[[0, 0.9, 0]], [[0, 0.9, 0]]] },
        { id: "agent-1", joints: [[[1, 0.9, 0]], [[1, 0.9, 0]]] },
        { id: "agent-2", joints: [[[2, 0.9, 0]], [[2, 0.9, 0]]] },
      ],
    });
    s.scrubTo(0);
    const ctx = new RecordingCtx();
    expect(drawScene(ctx, s, DEFAULT_CAMERA, W, H)).toEqual(["agent-0", "agent-1"]);
    s.scrubTo(2);
    expect(drawScene(new RecordingCtx(), s, DEFAULT_CAMERA, W, H)).toEqual([
      "agent-0",
      "agent-1",
      "agent-2",
    ]);
  });

  it("renders only received frames (no extrapolation past the buffer)", () => {
    const s = stateWithFrame();
    const last = s.bufferedFrames() - 1;
    s.scrubTo(last + 100);
    expect(s.cursor).toBe(last);
    const ctx = new RecordingCtx();
    // drawing at the clamped cursor uses the final received frame
    expect(drawScene(ctx, s, DEFAULT_CAMERA, W, H).length).toBe(2);
  });
});
