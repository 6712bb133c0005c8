/**
 * Session client: owns the websocket, feeds ViewState, and pulls windows.
 *
 * Generation is demand-driven. The client requests one `step` at a time
 * and only while fewer than MAX_LOOKAHEAD windows sit beyond the playback
 * cursor, so at most ~2 windows of already-generated motion can ignore a
 * prompt update. The websocket constructor is injected so the same client
 * runs in the browser (native WebSocket) and under node tests ("ws").
 */

import {
  ServerMessage,
  StartOptions,
  addAgentMessage,
  parseServerMessage,
  startMessage,
  stepMessage,
  stopMessage,
  textMessage,
} from "./protocol.js";
import { ViewState } from "./state.js";

export const MAX_LOOKAHEAD = 2;

/** The subset of the browser WebSocket API the client uses. */
export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: ((ev?: unknown) => void) | null;
  onmessage: ((ev: { data: unknown }) => void) | null;
  onerror: ((ev?: unknown) => void) | null;
  onclose: ((ev?: unknown) => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

export interface ClientOptions {
  url: string;
  state: ViewState;
  socketFactory: SocketFactory;
  /** Called after every applied server message (render hook). */
  onUpdate?: (msg: ServerMessage) => void;
}

export class SteerClient {
  readonly state: ViewState;
  private readonly url: string;
  private readonly socketFactory: SocketFactory;
  private readonly onUpdate?: (msg: ServerMessage) => void;
  private socket: SocketLike | null = null;
  private started = false;
  private awaitingStep = false;
  private exhaustedByServer = false;

  constructor(opts: ClientOptions) {
    this.url = opts.url;
    this.state = opts.state;
    this.socketFactory = opts.socketFactory;
    this.onUpdate = opts.onUpdate;
  }

  /** Open the socket. Re-callable after failure: the retry affordance. */
  connect(): Promise<void> {
    this.state.status = "connecting";
    return new Promise((resolve, reject) => {
      let settled = false;
      const socket = this.socketFactory(this.url);
      this.socket = socket;
      socket.onopen = () => {
        this.state.status = "open";
        settled = true;
        resolve();
      };
      socket.onerror = () => {
        this.state.status = "failed";
        if (!settled) {
          settled = true;
          reject(new Error(`connection to ${this.url} failed`));
        }
      };
      socket.onclose = () => {
        if (this.state.status !== "failed") this.state.status = "closed";
        if (!settled) {
          settled = true;
          reject(new Error(`connection to ${this.url} closed before opening`));
        }
      };
      socket.onmessage = (ev) => this.handleRaw(String(ev.data));
    });
  }

  private handleRaw(raw: string): void {
    const msg = parseServerMessage(raw);
    if (msg.type === "error" && msg.code === "exhausted") {
      this.exhaustedByServer = true;
      this.awaitingStep = false;
    }
    if (msg.type === "ack" && msg.of === "step") {
      this.awaitingStep = false;
    }
    this.state.apply(msg);
    this.onUpdate?.(msg);
    this.pump();
  }

  private send(data: string): void {
    if (!this.socket || this.state.status !== "open") {
      throw new Error("socket is not open");
    }
    this.socket.send(data);
  }

  start(opts: StartOptions): void {
    // Flag first: a server that answers within send() must find the pump armed.
    this.started = true;
    this.send(startMessage(opts));
  }

  /**
   * Request generation while the buffer runs below the lookahead cap.
   * One outstanding step at a time keeps the bound exact.
   */
  pump(): void {
    if (!this.started || this.state.stopped || this.awaitingStep) return;
    if (this.exhaustedByServer || this.state.exhausted()) return;
    if (this.state.sessionId === null) return;
    if (this.state.lookaheadWindows() >= MAX_LOOKAHEAD) return;
    this.awaitingStep = true;
    this.send(stepMessage(1));
  }

  /** Send a prompt update. Empty or blank text never leaves the client. */
  sendText(text: string, scope: "global" | "agent" = "global", agent?: string): void {
    if (text.trim().length === 0) {
      throw new Error("empty text update rejected");
    }
    this.send(textMessage(text, scope, agent));
  }

  addAgent(opts: { id?: string; text?: string; pose?: number[][] } = {}): void {
    this.send(addAgentMessage(opts));
  }

  stop(): void {
    this.send(stopMessage());
  }

  /** Move playback and refill the lookahead the move just consumed. */
  scrubTo(frame: number): number {
    const at = this.state.scrubTo(frame);
    this.pump();
    return at;
  }

  tick(): number {
    const at = this.state.tick();
    this.pump();
    return at;
  }

  close(): void {
    this.socket?.close();
  }
}
