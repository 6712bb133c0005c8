/**
 * Browser wiring: DOM controls around SteerClient + canvas rendering.
 * Everything stateful lives in ViewState; this file only translates DOM
 * events into client calls and repaints on a fps-gated animation loop.
 */

import { SteerClient, type SocketLike } from "./client.js";
import { DEFAULT_CAMERA, drawScene, Draw2D } from "./render.js";
import { ViewState } from "./state.js";
import { frameAtX, timelineLayout } from "./timeline.js";
import { transcriptFilename, transcriptToJsonl } from "./transcript.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  text = ""
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  if (text) node.textContent = text;
  return node;
}

function defaultServer(): string {
  const host = location.host || "127.0.0.1:8000";
  const proto = location.protocol === "https:" ? "wss" : "ws";
  return `${proto}://${host}/ws`;
}

export function mount(root: HTMLElement): void {
  let state = new ViewState();
  let client: SteerClient | null = null;

  const banner = el("div", { class: "banner", style: "display:none" });
  const urlInput = el("input", { value: defaultServer(), size: "32" });
  const agentsInput = el("input", { type: "number", value: "2", min: "1", max: "8", size: "3" });
  const seedInput = el("input", { type: "number", value: "0", min: "0", size: "6" });
  const framesInput = el("input", { type: "number", value: "128", min: "1", size: "6" });
  const textInput = el("input", { value: "two people walk together", size: "40" });
  const startBtn = el("button", {}, "connect + start");

  const draftInput = el("input", { placeholder: "new prompt...", size: "40" });
  const scopeSelect = el("select");
  scopeSelect.append(el("option", { value: "global" }, "global"));
  const sendBtn = el("button", { disabled: "" }, "send text");
  const addBtn = el("button", { disabled: "" }, "add agent");
  const playBtn = el("button", { disabled: "" }, "play");
  const stopBtn = el("button", { disabled: "" }, "stop + export");

  const canvas = el("canvas", { width: "840", height: "480" });
  const strip = el("canvas", { width: "840", height: "46" });
  const status = el("div", { class: "status" }, "idle");
  const log = el("pre", { class: "log" });

  root.append(banner, status, canvas, strip, log);
  const rows = [
    [el("span", {}, "server"), urlInput, el("span", {}, "agents"), agentsInput,
     el("span", {}, "seed"), seedInput, el("span", {}, "frames"), framesInput],
    [el("span", {}, "prompt"), textInput, startBtn],
    [draftInput, scopeSelect, sendBtn, addBtn, playBtn, stopBtn],
  ];
  for (const parts of rows) {
    const row = el("div", { class: "row" });
    row.append(...parts);
    root.insertBefore(row, status);
  }

  const ctx = canvas.getContext("2d") as unknown as Draw2D;
  const stripCtx = strip.getContext("2d")!;
  const cam = { ...DEFAULT_CAMERA };

  function showError(text: string | null): void {
    banner.style.display = text ? "block" : "none";
    banner.textContent = text ?? "";
  }

  function setSessionControls(enabled: boolean): void {
    for (const b of [sendBtn, addBtn, playBtn, stopBtn]) {
      if (enabled) b.removeAttribute("disabled");
      else b.setAttribute("disabled", "");
    }
  }

  function refreshScopes(): void {
    while (scopeSelect.children.length > 1) scopeSelect.removeChild(scopeSelect.lastChild!);
    for (const id of state.lanes.keys()) {
      scopeSelect.append(el("option", { value: id }, `agent ${id}`));
    }
  }

  function paintStrip(): void {
    const layout = timelineLayout(state, strip.width);
    stripCtx.clearRect(0, 0, strip.width, strip.height);
    stripCtx.fillStyle = "#1d2128";
    stripCtx.fillRect(0, 0, strip.width, strip.height);
    stripCtx.fillStyle = "#394150";
    stripCtx.fillRect(0, 0, layout.bufferedX, strip.height);
    stripCtx.strokeStyle = "#566070";
    for (const tick of layout.windowTicks) {
      stripCtx.beginPath();
      stripCtx.moveTo(tick.x, 0);
      stripCtx.lineTo(tick.x, strip.height);
      stripCtx.stroke();
    }
    for (const m of layout.markers) {
      stripCtx.fillStyle = m.kind === "text" ? "#f5c542" : "#3ecf8e";
      stripCtx.fillRect(m.x - 2, 0, 4, strip.height);
    }
    stripCtx.fillStyle = "#ffffff";
    stripCtx.fillRect(layout.cursorX - 1, 0, 2, strip.height);
  }

  function paint(): void {
    drawScene(ctx, state, cam, canvas.width, canvas.height);
    paintStrip();
    status.textContent =
      `${state.status}` +
      (state.sessionId
        ? ` | session ${state.sessionId.slice(0, 8)} | window ${Math.floor(
            state.cursor / Math.max(state.k, 1)
          )}/${state.windowsReceived} | frame ${state.cursor}/${state.bufferedFrames()}`
        : "");
    log.textContent = state.events.slice(-8).map((e) => `${e.kind}: ${e.detail}`).join("\n");
    showError(state.lastError ? `${state.lastError.code}: ${state.lastError.message}` : null);
  }

  let lastTick = 0;
  function loop(now: number): void {
    const frameMs = 1000 / Math.max(state.fps, 1);
    if (state.playing && client && now - lastTick >= frameMs) {
      client.tick();
      lastTick = now;
    }
    paint();
    requestAnimationFrame(loop);
  }
  requestAnimationFrame(loop);

  startBtn.onclick = async () => {
    showError(null);
    client?.close();
    // fresh per-session state: window indices restart at 0 on the server
    state = new ViewState();
    client = new SteerClient({
      url: urlInput.value,
      state,
      socketFactory: (url) => new WebSocket(url) as unknown as SocketLike,
      onUpdate: () => {
        refreshScopes();
        paint();
      },
    });
    try {
      await client.connect();
    } catch (e) {
      showError(`${(e as Error).message} - check the server and retry`);
      return;
    }
    const frames = parseInt(framesInput.value, 10);
    client.start({
      agents: Math.max(parseInt(agentsInput.value, 10) || 1, 1),
      text: textInput.value,
      seed: parseInt(seedInput.value, 10) || 0,
      totalFrames: Number.isFinite(frames) ? frames : null,
    });
    setSessionControls(true);
    state.playing = true;
    playBtn.textContent = "pause";
  };

  sendBtn.onclick = () => {
    if (!client) return;
    const scope = scopeSelect.value;
    try {
      if (scope === "global") client.sendText(draftInput.value, "global");
      else client.sendText(draftInput.value, "agent", scope);
      state.draft = "";
      draftInput.value = "";
    } catch (e) {
      showError((e as Error).message);
    }
  };
  draftInput.oninput = () => {
    state.draft = draftInput.value;
  };

  addBtn.onclick = () => client?.addAgent();

  playBtn.onclick = () => {
    state.playing = !state.playing;
    playBtn.textContent = state.playing ? "pause" : "play";
    client?.pump();
  };

  strip.onclick = (ev) => {
    const rect = strip.getBoundingClientRect();
    client?.scrubTo(frameAtX(state, ev.clientX - rect.left, strip.width));
    paint();
  };

  stopBtn.onclick = () => {
    if (!client) return;
    state.playing = false;
    const saveWhenReady = setInterval(() => {
      if (!state.transcript) return;
      clearInterval(saveWhenReady);
      const blob = new Blob([transcriptToJsonl(state.transcript)], {
        type: "application/jsonl",
      });
      const a = el("a", {
        href: URL.createObjectURL(blob),
        download: transcriptFilename(state.sessionId),
      });
      a.click();
      URL.revokeObjectURL(a.href);
    }, 50);
    client.stop();
  };
}

if (typeof document !== "undefined") {
  const root = document.getElementById("app");
  if (root) mount(root);
}
