import { describe, expect, it } from "vitest";

import { ViewState } from "../src/state.js";
import { frameAtX, timelineLayout } from "../src/timeline.js";

const K = 16;
const WIDTH = 640;

function stateWithWindows(windows: number, total: number | null = 64): ViewState {
  const s = new ViewState();
  s.apply({
    type: "session",
    session_id: "s",
    h: 4,
    k: K,
    fps: 20,
    agents: ["agent-0"],
    total_frames: total,
  });
  for (let w = 0; w < windows; w++) {
    s.apply({
      type: "frames",
      window_index: w,
      agents: [
        {
          id: "agent-0",
          joints: Array.from({ length: K }, () => [[0, 0.9, 0]]),
        },
      ],
    });
  }
  return s;
}

describe("timeline layout", () => {
  it("spans the session budget and marks window boundaries", () => {
    const s = stateWithWindows(2);
    const layout = timelineLayout(s, WIDTH);
    expect(layout.span).toBe(64);
    expect(layout.windowTicks.map((t) => t.x)).toEqual([
      0,
      (16 / 64) * WIDTH,
      (32 / 64) * WIDTH,
    ]);
    expect(layout.bufferedX).toBe(WIDTH / 2);
  });

  it("pins the cursor inside the buffered region", () => {
    const s = stateWithWindows(2);
    s.scrubTo(24);
    const layout = timelineLayout(s, WIDTH);
    expect(layout.cursorX).toBe((24 / 64) * WIDTH);
    expect(layout.cursorX).toBeLessThanOrEqual(layout.bufferedX);
  });

  it("places ack markers at their window boundary", () => {
    const s = stateWithWindows(2);
    s.apply({ type: "ack", of: "text", window_index: 2, scope: "global" });
    const layout = timelineLayout(s, WIDTH);
    expect(layout.markers).toHaveLength(1);
    expect(layout.markers[0].x).toBe((32 / 64) * WIDTH);
  });

  it("grows the span with the buffer when no budget was set", () => {
    const s = stateWithWindows(3, null);
    const layout = timelineLayout(s, WIDTH);
    expect(layout.span).toBe(48);
    expect(layout.bufferedX).toBe(WIDTH);
  });
});

describe("scrub mapping", () => {
  it("inverts layout x back to frames, clamped to the buffer", () => {
    const s = stateWithWindows(2);
    expect(frameAtX(s, 0, WIDTH)).toBe(0);
    expect(frameAtX(s, WIDTH / 4, WIDTH)).toBe(16);
    // clicking in the unbuffered half clamps to the last buffered frame
    expect(frameAtX(s, WIDTH, WIDTH)).toBe(31);
    expect(frameAtX(s, -50, WIDTH)).toBe(0);
  });

  it("round-trips with the cursor position", () => {
    const s = stateWithWindows(4);
    for (const frame of [0, 7, 31, 63]) {
      s.scrubTo(frame);
      const layout = timelineLayout(s, WIDTH);
      expect(frameAtX(s, layout.cursorX, WIDTH)).toBe(frame);
    }
  });

  it("is safe before any frames arrive", () => {
    const s = new ViewState();
    expect(frameAtX(s, 100, WIDTH)).toBe(0);
    const layout = timelineLayout(s, WIDTH);
    expect(layout.cursorX).toBe(0);
  });
});
