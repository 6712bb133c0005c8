/**
 * Timeline strip geometry: window ticks, ack markers, and the cursor,
 * all expressed in pixels over the buffered frame range. Pure functions
 * of ViewState so they are testable without a canvas.
 */

import { TimelineMarker, ViewState } from "./state.js";

export interface TimelineLayout {
  /** Total frames the strip spans (buffered, or the session budget if known). */
  span: number;
  cursorX: number;
  /** One tick per buffered window boundary. */
  windowTicks: Array<{ windowIndex: number; x: number }>;
  markers: Array<TimelineMarker & { x: number }>;
  /** Fraction of the strip that holds buffered (scrubbable) frames. */
  bufferedX: number;
}

function frameToX(frame: number, span: number, width: number): number {
  if (span <= 0) return 0;
  return (frame / span) * width;
}

export function timelineLayout(state: ViewState, width: number): TimelineLayout {
  const buffered = state.bufferedFrames();
  const span = state.totalFrames !== null ? state.totalFrames : Math.max(buffered, 1);
  const ticks = [];
  for (let w = 0; w <= state.windowsReceived; w++) {
    ticks.push({ windowIndex: w, x: frameToX(w * state.k, span, width) });
  }
  return {
    span,
    cursorX: frameToX(state.cursor, span, width),
    windowTicks: ticks,
    markers: state.markers.map((m) => ({ ...m, x: frameToX(m.frame, span, width) })),
    bufferedX: frameToX(buffered, span, width),
  };
}

/** Inverse of the layout mapping, clamped to the buffered range. */
export function frameAtX(state: ViewState, x: number, width: number): number {
  const buffered = state.bufferedFrames();
  if (buffered === 0 || width <= 0) return 0;
  const span = state.totalFrames !== null ? state.totalFrames : buffered;
  const frame = Math.round((x / width) * span);
  return Math.min(Math.max(frame, 0), buffered - 1);
}
