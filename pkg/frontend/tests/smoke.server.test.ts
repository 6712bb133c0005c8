/**
 * Live-service smoke test: drives a real generation server end to end.
 *
 * Builds a tiny dataset and checkpoint pair with the CLI, serves it on a
 * local port, and exercises the full operator loop over a real websocket:
 * connect, start a two-agent session, buffer and render two windows, steer
 * with a text update whose ack lands a marker on the next window boundary,
 * play to the frame budget, export the transcript, and check that the CLI
 * replay regenerates the streamed feature rows bit for bit.
 *
 * Thread counts are pinned to one in every spawned process so the server
 * and the replay reduce floating point sums in the same order.
 */

import { execFileSync, spawn, type ChildProcessWithoutNullStreams } from "node:child_process";
import { createHash } from "node:crypto";
import { mkdtempSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import WebSocket from "ws";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { MAX_LOOKAHEAD, SteerClient, type SocketLike } from "../src/client.js";
import { DEFAULT_CAMERA, GRID_COLOR, SKELETON_EDGES, drawScene, type Draw2D } from "../src/render.js";
import { ViewState } from "../src/state.js";
import { transcriptFilename, transcriptToJsonl } from "../src/transcript.js";

const ENV = { ...process.env, OMP_NUM_THREADS: "1", MKL_NUM_THREADS: "1" };
const TOTAL_FRAMES = 64; // divisible by the window stride: replay is untrimmed

const VAE_FLAGS = [
  "--steps", "12", "--batch", "3", "--latent", "16", "--hidden", "32",
  "--ff", "64", "--layers", "1", "--heads", "2", "--log-every", "4",
];
const DIFF_FLAGS = [
  "--stage1", "8", "--stage2", "2", "--stage3", "2", "--batch", "3",
  "--t-diff", "8", "--latent", "16", "--blocks", "1", "--heads", "2",
  "--hidden", "32", "--ff", "64", "--log-every", "4",
];

let root = "";
let checkpoint = "";
let port = 0;
let server: ChildProcessWithoutNullStreams | null = null;
let serverLog = "";
let health: { h: number; k: number; fps: number };

const state = new ViewState();
let client: SteerClient;

function run(args: string[]): void {
  try {
    execFileSync("hint", args, { env: ENV, stdio: "pipe" });
  } catch (err) {
    const stderr = (err as { stderr?: Buffer }).stderr?.toString() ?? "";
    throw new Error(`hint ${args[0]} failed:\n${stderr}`);
  }
}

async function waitFor(cond: () => boolean, ms: number, label: string): Promise<void> {
  const deadline = Date.now() + ms;
  while (!cond()) {
    if (Date.now() > deadline) {
      throw new Error(`timed out waiting for ${label}\nserver log:\n${serverLog}`);
    }
    await new Promise((r) => setTimeout(r, 20));
  }
}

async function pollHealth(url: string, ms: number): Promise<{ h: number; k: number; fps: number }> {
  const deadline = Date.now() + ms;
  for (;;) {
    try {
      const res = await fetch(url);
      if (res.ok) {
        const body = (await res.json()) as { status: string; h: number; k: number; fps: number };
        if (body.status === "ok") return body;
      }
    } catch {
      // server still booting
    }
    if (Date.now() > deadline) {
      throw new Error(`service not healthy within ${ms}ms\nserver log:\n${serverLog}`);
    }
    await new Promise((r) => setTimeout(r, 250));
  }
}

/** Draw2D double that records stroke colors; geometry is covered elsewhere. */
class RecordingCtx implements Draw2D {
  strokeStyle = "";
  fillStyle = "";
  lineWidth = 0;
  globalAlpha = 1;
  strokes: string[] = [];
  clears = 0;
  clearRect(): void {
    this.clears += 1;
  }
  beginPath(): void {}
  moveTo(): void {}
  lineTo(): void {}
  arc(): void {}
  stroke(): void {
    this.strokes.push(this.strokeStyle);
  }
  fill(): void {}
}

function renderOnce(): { drawn: string[]; boneStrokes: string[] } {
  const ctx = new RecordingCtx();
  const drawn = drawScene(ctx, state, DEFAULT_CAMERA, 840, 480);
  expect(ctx.clears).toBe(1);
  return { drawn, boneStrokes: ctx.strokes.filter((s) => s !== GRID_COLOR) };
}

function sha256f32(rows: ReadonlyArray<ReadonlyArray<number>>): string {
  const width = rows[0]?.length ?? 0;
  const flat = new Float32Array(rows.length * width);
  let i = 0;
  for (const row of rows) for (const v of row) flat[i++] = v;
  const bytes = Buffer.from(flat.buffer, flat.byteOffset, flat.byteLength);
  return createHash("sha256").update(bytes).digest("hex");
}

beforeAll(async () => {
  root = mkdtempSync(join(tmpdir(), "steer-smoke-"));
  const data = join(root, "data");
  const vae = join(root, "vae.hckpt");
  checkpoint = join(root, "diffusion.hckpt");
  run(["make-data", "--out", data, "--sequences", "4", "--min-length", "40",
       "--max-length", "48", "--seed", "3"]);
  run(["train-vae", "--data", data, "--out", vae, ...VAE_FLAGS]);
  run(["train-diffusion", "--data", data, "--vae", vae, "--out", checkpoint, ...DIFF_FLAGS]);

  port = 18000 + Math.floor(Math.random() * 20000);
  server = spawn("hint", ["serve", "--checkpoint", checkpoint, "--port", String(port)], {
    env: ENV,
  });
  server.stdout.on("data", (b) => (serverLog += b));
  server.stderr.on("data", (b) => (serverLog += b));
  health = await pollHealth(`http://127.0.0.1:${port}/health`, 120_000);
}, 600_000);

afterAll(async () => {
  client?.close();
  server?.kill("SIGTERM");
  await new Promise((r) => setTimeout(r, 200));
  if (root) rmSync(root, { recursive: true, force: true });
});

describe("live service smoke", () => {
  it("connects to the running service", async () => {
    client = new SteerClient({
      url: `ws://127.0.0.1:${port}/ws`,
      state,
      socketFactory: (url) => new WebSocket(url) as unknown as SocketLike,
    });
    await client.connect();
    expect(state.status).toBe("open");
  });

  it("starts a two-agent session and pulls the first two windows", async () => {
    client.start({
      agents: 2,
      text: "walk together in a circle",
      seed: 5,
      totalFrames: TOTAL_FRAMES,
      fullFeatures: true,
    });
    await waitFor(() => state.windowsReceived >= MAX_LOOKAHEAD, 120_000, "two buffered windows");

    expect(state.sessionId).toBeTruthy();
    expect(state.h).toBe(health.h);
    expect(state.k).toBe(health.k);
    expect(state.fps).toBe(health.fps);
    expect(state.totalFrames).toBe(TOTAL_FRAMES);
    expect([...state.lanes.keys()].sort()).toEqual(["agent-0", "agent-1"]);
    expect(state.bufferedFrames()).toBe(MAX_LOOKAHEAD * state.k);
  });

  it("acks a text update with a marker on the next window boundary", async () => {
    expect(() => client.sendText("   ")).toThrow(/empty/);

    const nextWindow = state.windowsReceived; // no step in flight: lookahead is full
    client.sendText("now crouch low and circle each other");
    await waitFor(() => state.markers.length > 0, 30_000, "text ack marker");

    const marker = state.markers[0];
    expect(marker.kind).toBe("text");
    expect(marker.scope).toBe("global");
    expect(marker.windowIndex).toBe(nextWindow);
    expect(marker.frame).toBe(nextWindow * state.k);
  });

  it("renders both buffered windows as colored stick figures", () => {
    expect(state.cursor).toBe(0);
    const first = renderOnce();
    expect(first.drawn.sort()).toEqual(["agent-0", "agent-1"]);
    expect(first.boneStrokes.length).toBe(2 * SKELETON_EDGES.length);
    expect(new Set(first.boneStrokes).size).toBe(2);

    client.scrubTo(state.k); // into the second buffered window
    const second = renderOnce();
    expect(second.drawn.sort()).toEqual(["agent-0", "agent-1"]);
    expect(second.boneStrokes.length).toBe(2 * SKELETON_EDGES.length);
  });

  it("plays out the frame budget without overrunning the buffer", async () => {
    const limit = state.windowLimit();
    expect(limit).toBe(TOTAL_FRAMES / state.k);
    await waitFor(() => {
      client.scrubTo(state.bufferedFrames() - 1);
      return state.windowsReceived >= (limit ?? 0);
    }, 120_000, "all windows generated");

    expect(state.windowsReceived).toBe(limit);
    expect(state.exhausted()).toBe(true);
    expect(state.bufferedFrames()).toBe(TOTAL_FRAMES);
    expect(client.scrubTo(10_000)).toBe(TOTAL_FRAMES - 1);
    for (const lane of state.lanes.values()) {
      expect(lane.frames.length).toBe(TOTAL_FRAMES);
      expect(lane.features.length).toBe(TOTAL_FRAMES);
      const widths = new Set(lane.features.map((row) => row.length));
      expect(widths.size).toBe(1);
    }
  });

  it("stops and exports the session transcript", async () => {
    client.stop();
    await waitFor(() => state.transcript !== null, 30_000, "stop transcript");

    expect(state.stopped).toBe(true);
    const events = state.transcript ?? [];
    expect(events[0]?.event).toBe("init");
    expect(events.some((e) => e.event === "text")).toBe(true);
    expect(events.filter((e) => e.event === "step").length).toBe(TOTAL_FRAMES / state.k);
  });

  it("replay regenerates the streamed features bit for bit", () => {
    const file = join(root, transcriptFilename(state.sessionId));
    writeFileSync(file, transcriptToJsonl(state.transcript ?? []));

    const out = execFileSync(
      "hint",
      ["replay", "--transcript", file, "--checkpoint", checkpoint],
      { env: ENV, encoding: "utf8" },
    );
    const reported = new Map<string, { frames: number; digest: string }>();
    for (const line of out.trim().split("\n")) {
      const m = /^(\S+): (\d+) frames sha256=([0-9a-f]{64})$/.exec(line.trim());
      if (m) reported.set(m[1], { frames: Number(m[2]), digest: m[3] });
    }

    expect(reported.size).toBe(state.lanes.size);
    for (const lane of state.lanes.values()) {
      const rep = reported.get(lane.id);
      expect(rep, `replay output missing ${lane.id}`).toBeDefined();
      expect(rep?.frames).toBe(lane.features.length);
      expect(rep?.digest).toBe(sha256f32(lane.features));
    }
  });
});
