/**
 * Single mutable view state fed by server messages and operator input.
 *
 * Received frames are stored by reference and never written to; every
 * mutation here is additive (append frames, move cursor, log events).
 * The playback cursor is clamped to the buffered frame range, so the
 * renderer can index lanes without bounds checks.
 */

import {
  AckMsg,
  ErrorMsg,
  FramesMsg,
  ServerMessage,
  SessionMsg,
  TranscriptEvent,
} from "./protocol.js";

export type ConnectionStatus = "idle" | "connecting" | "open" | "closed" | "failed";

export const AGENT_PALETTE = [
  "#4e9bff",
  "#ff7f50",
  "#3ecf8e",
  "#e85d9a",
  "#f5c542",
  "#9b6bff",
  "#47d1d1",
  "#c0c85f",
];

export interface AgentLane {
  id: string;
  color: string;
  /** Global frame index of this lane's first buffered frame. */
  startFrame: number;
  /** One entry per frame: J x 3 joint positions, exactly as received. */
  frames: ReadonlyArray<ReadonlyArray<ReadonlyArray<number>>>;
  /** Full feature rows aligned with frames, when the session streams them. */
  features: ReadonlyArray<ReadonlyArray<number>>;
}

export interface TimelineMarker {
  kind: "text" | "add_agent";
  windowIndex: number;
  frame: number;
  /** "global" or an agent id: which lane the marker binds to. */
  scope: string;
  label: string;
}

export interface LogEvent {
  kind: string;
  detail: string;
}

export class ViewState {
  status: ConnectionStatus = "idle";
  sessionId: string | null = null;
  h = 0;
  k = 0;
  fps = 0;
  totalFrames: number | null = null;

  lanes = new Map<string, AgentLane>();
  /** Count of contiguous windows buffered so far. */
  windowsReceived = 0;
  /** Playback position, a global frame index; never exceeds buffered frames. */
  cursor = 0;
  playing = false;

  /** Operator's prompt draft, not yet sent. */
  draft = "";
  markers: TimelineMarker[] = [];
  events: LogEvent[] = [];
  lastError: ErrorMsg | null = null;
  transcript: TranscriptEvent[] | null = null;
  stopped = false;

  /** Total buffered frames on the global timeline. */
  bufferedFrames(): number {
    return this.windowsReceived * this.k;
  }

  /** Windows of lookahead beyond the window the cursor sits in. */
  lookaheadWindows(): number {
    if (this.k <= 0 || this.windowsReceived === 0) return 0;
    return this.windowsReceived - Math.floor(this.cursor / this.k);
  }

  /** The session's window budget, when total_frames was set. */
  windowLimit(): number | null {
    if (this.totalFrames === null || this.k <= 0) return null;
    return Math.ceil(this.totalFrames / this.k);
  }

  exhausted(): boolean {
    const limit = this.windowLimit();
    return limit !== null && this.windowsReceived >= limit;
  }

  /** Clamp-move the playback cursor; scrubbing replays buffered frames only. */
  scrubTo(frame: number): number {
    const last = Math.max(this.bufferedFrames() - 1, 0);
    this.cursor = Math.min(Math.max(Math.floor(frame), 0), last);
    return this.cursor;
  }

  /** Advance playback by one frame, clamped to the buffer. */
  tick(): number {
    return this.scrubTo(this.cursor + 1);
  }

  private log(kind: string, detail: string): void {
    this.events.push({ kind, detail });
  }

  private laneFor(id: string, startFrame: number): AgentLane {
    let lane = this.lanes.get(id);
    if (!lane) {
      lane = {
        id,
        color: AGENT_PALETTE[this.lanes.size % AGENT_PALETTE.length],
        startFrame,
        frames: [],
        features: [],
      };
      this.lanes.set(id, lane);
    }
    return lane;
  }

  onSession(msg: SessionMsg): void {
    this.sessionId = msg.session_id;
    this.h = msg.h;
    this.k = msg.k;
    this.fps = msg.fps;
    this.totalFrames = msg.total_frames;
    for (const id of msg.agents) this.laneFor(id, 0);
    this.log("session", `${msg.session_id} h=${msg.h} k=${msg.k} fps=${msg.fps}`);
  }

  onFrames(msg: FramesMsg): void {
    if (msg.window_index !== this.windowsReceived) {
      // The service contract is gap-free increasing windows; surface a
      // violation loudly instead of silently mis-indexing the timeline.
      throw new Error(
        `window gap: got index ${msg.window_index}, expected ${this.windowsReceived}`
      );
    }
    const startFrame = msg.window_index * this.k;
    for (const agent of msg.agents) {
      const lane = this.laneFor(agent.id, startFrame);
      (lane.frames as Array<ReadonlyArray<ReadonlyArray<number>>>).push(...agent.joints);
      if (agent.features) {
        (lane.features as Array<ReadonlyArray<number>>).push(...agent.features);
      }
    }
    this.windowsReceived = msg.window_index + 1;
    this.log("frames", `window ${msg.window_index}: ${msg.agents.length} agents`);
  }

  onAck(msg: AckMsg): void {
    switch (msg.of) {
      case "text":
        this.markers.push({
          kind: "text",
          windowIndex: msg.window_index,
          frame: msg.window_index * this.k,
          scope: msg.scope,
          label: `text @ window ${msg.window_index}`,
        });
        this.log("ack", `text takes effect at window ${msg.window_index} (${msg.scope})`);
        break;
      case "add_agent":
        this.markers.push({
          kind: "add_agent",
          windowIndex: msg.window_index,
          frame: msg.window_index * this.k,
          scope: msg.id,
          label: `+${msg.id} @ window ${msg.window_index}`,
        });
        this.log("ack", `agent ${msg.id} joins at window ${msg.window_index}`);
        break;
      case "step":
        this.log("ack", `step generated ${msg.windows} window(s)`);
        break;
      case "stop":
        this.transcript = msg.transcript;
        this.stopped = true;
        this.log("ack", `stop: transcript with ${msg.transcript.length} events`);
        break;
    }
  }

  onError(msg: ErrorMsg): void {
    this.lastError = msg;
    this.log("error", `${msg.code}: ${msg.message}`);
  }

  apply(msg: ServerMessage): void {
    switch (msg.type) {
      case "session":
        this.onSession(msg);
        break;
      case "frames":
        this.onFrames(msg);
        break;
      case "ack":
        this.onAck(msg);
        break;
      case "error":
        this.onError(msg);
        break;
    }
  }

  /** Joint frame each lane shows at the cursor; absent before a lane starts. */
  frameAtCursor(): Map<string, ReadonlyArray<ReadonlyArray<number>>> {
    const out = new Map<string, ReadonlyArray<ReadonlyArray<number>>>();
    for (const lane of this.lanes.values()) {
      const local = this.cursor - lane.startFrame;
      if (local >= 0 && local < lane.frames.length) {
        out.set(lane.id, lane.frames[local]);
      }
    }
    return out;
  }
}
