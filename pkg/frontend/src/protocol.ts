/**
 * Wire schema of the motion streaming service.
 *
 * One websocket per session. The client sends start / text / step /
 * add_agent / stop; the server replies with session / frames / ack /
 * error messages. Parsing is strict: a message that does not match the
 * schema throws, so malformed input never reaches view state.
 */

export type Vec3 = [number, number, number];

/** One agent's contribution to a frames message: K frames of J joints. */
export interface FramesAgent {
  id: string;
  joints: number[][][];
  /** Full feature rows (K x d), present when the session asked for them. */
  features?: number[][];
}

export interface SessionMsg {
  type: "session";
  session_id: string;
  h: number;
  k: number;
  fps: number;
  agents: string[];
  total_frames: number | null;
}

export interface FramesMsg {
  type: "frames";
  window_index: number;
  agents: FramesAgent[];
}

export interface AckTextMsg {
  type: "ack";
  of: "text";
  window_index: number;
  scope: string;
}

export interface AckStepMsg {
  type: "ack";
  of: "step";
  windows: number;
}

export interface AckAddAgentMsg {
  type: "ack";
  of: "add_agent";
  id: string;
  window_index: number;
}

export type TranscriptEvent = Record<string, unknown> & { event: string };

export interface AckStopMsg {
  type: "ack";
  of: "stop";
  transcript: TranscriptEvent[];
}

export type AckMsg = AckTextMsg | AckStepMsg | AckAddAgentMsg | AckStopMsg;

export interface ErrorMsg {
  type: "error";
  code: string;
  message: string;
}

export type ServerMessage = SessionMsg | FramesMsg | AckMsg | ErrorMsg;

export class SchemaError extends Error {}

function fail(msg: string): never {
  throw new SchemaError(msg);
}

function isObject(v: unknown): v is Record<string, unknown> {
  return typeof v === "object" && v !== null && !Array.isArray(v);
}

function str(obj: Record<string, unknown>, key: string): string {
  const v = obj[key];
  if (typeof v !== "string") fail(`field '${key}' must be a string`);
  return v;
}

function num(obj: Record<string, unknown>, key: string): number {
  const v = obj[key];
  if (typeof v !== "number" || !Number.isFinite(v)) fail(`field '${key}' must be a finite number`);
  return v;
}

function parseSession(obj: Record<string, unknown>): SessionMsg {
  const agents = obj["agents"];
  if (!Array.isArray(agents) || agents.some((a) => typeof a !== "string")) {
    fail("field 'agents' must be a string array");
  }
  const total = obj["total_frames"];
  if (total !== null && typeof total !== "number") fail("field 'total_frames' must be a number or null");
  return {
    type: "session",
    session_id: str(obj, "session_id"),
    h: num(obj, "h"),
    k: num(obj, "k"),
    fps: num(obj, "fps"),
    agents: agents as string[],
    total_frames: total as number | null,
  };
}

function parseFramesAgent(v: unknown): FramesAgent {
  if (!isObject(v)) fail("frames agent entry must be an object");
  const joints = v["joints"];
  if (!Array.isArray(joints) || joints.length === 0) fail("agent 'joints' must be a non-empty array");
  for (const frame of joints) {
    if (!Array.isArray(frame) || frame.length === 0) fail("each joints frame must be a non-empty array");
    for (const j of frame) {
      if (!Array.isArray(j) || j.length !== 3 || j.some((c) => typeof c !== "number")) {
        fail("each joint must be [x, y, z]");
      }
    }
  }
  const out: FramesAgent = { id: str(v, "id"), joints: joints as number[][][] };
  const features = v["features"];
  if (features !== undefined) {
    if (!Array.isArray(features) || features.length !== joints.length) {
      fail("agent 'features' must align with 'joints' frames");
    }
    out.features = features as number[][];
  }
  return out;
}

function parseFrames(obj: Record<string, unknown>): FramesMsg {
  const agents = obj["agents"];
  if (!Array.isArray(agents) || agents.length === 0) fail("frames 'agents' must be a non-empty array");
  return {
    type: "frames",
    window_index: num(obj, "window_index"),
    agents: agents.map(parseFramesAgent),
  };
}

function parseAck(obj: Record<string, unknown>): AckMsg {
  const of = str(obj, "of");
  switch (of) {
    case "text":
      return { type: "ack", of, window_index: num(obj, "window_index"), scope: str(obj, "scope") };
    case "step":
      return { type: "ack", of, windows: num(obj, "windows") };
    case "add_agent":
      return { type: "ack", of, id: str(obj, "id"), window_index: num(obj, "window_index") };
    case "stop": {
      const transcript = obj["transcript"];
      if (!Array.isArray(transcript) || transcript.some((e) => !isObject(e) || typeof e["event"] !== "string")) {
        fail("stop ack 'transcript' must be a list of events");
      }
      return { type: "ack", of, transcript: transcript as TranscriptEvent[] };
    }
    default:
      return fail(`unknown ack 'of' ${JSON.stringify(of)}`);
  }
}

export function parseServerMessage(raw: string): ServerMessage {
  let data: unknown;
  try {
    data = JSON.parse(raw);
  } catch (e) {
    fail(`invalid JSON: ${(e as Error).message}`);
  }
  if (!isObject(data)) fail("message must be a JSON object");
  const type = data["type"];
  switch (type) {
    case "session":
      return parseSession(data);
    case "frames":
      return parseFrames(data);
    case "ack":
      return parseAck(data);
    case "error":
      return { type: "error", code: str(data, "code"), message: str(data, "message") };
    default:
      return fail(`unknown message type ${JSON.stringify(type)}`);
  }
}

export interface StartOptions {
  agents: number;
  text?: string;
  seed?: number;
  totalFrames?: number | null;
  layout?: string;
  fullFeatures?: boolean;
}

export function startMessage(opts: StartOptions): string {
  const msg: Record<string, unknown> = { type: "start", agents: opts.agents };
  if (opts.text !== undefined) msg["text"] = opts.text;
  if (opts.seed !== undefined) msg["seed"] = opts.seed;
  if (opts.totalFrames !== undefined) msg["total_frames"] = opts.totalFrames;
  if (opts.layout !== undefined) msg["layout"] = opts.layout;
  if (opts.fullFeatures) msg["full_features"] = true;
  return JSON.stringify(msg);
}

export function textMessage(text: string, scope: "global" | "agent" = "global", agent?: string): string {
  if (scope === "agent") {
    if (!agent) fail("per-agent text needs an agent id");
    return JSON.stringify({ type: "text", text, scope, agent });
  }
  return JSON.stringify({ type: "text", text, scope });
}

export function stepMessage(windows = 1): string {
  return JSON.stringify({ type: "step", windows });
}

export function addAgentMessage(opts: { id?: string; text?: string; pose?: number[][] } = {}): string {
  const msg: Record<string, unknown> = { type: "add_agent" };
  if (opts.id !== undefined) msg["id"] = opts.id;
  if (opts.text !== undefined) msg["text"] = opts.text;
  if (opts.pose !== undefined) msg["pose"] = opts.pose;
  return JSON.stringify(msg);
}

export function stopMessage(): string {
  return JSON.stringify({ type: "stop" });
}
