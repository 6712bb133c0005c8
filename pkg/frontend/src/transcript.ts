/**
 * Transcript export: the stop ack carries the server's event list, and
 * the CLI replays the same JSONL bitwise. Numbers pass through untouched
 * (JSON.parse / JSON.stringify both round-trip IEEE doubles), so the
 * exported file reproduces the server's values exactly.
 */

import { TranscriptEvent } from "./protocol.js";

export function transcriptToJsonl(events: ReadonlyArray<TranscriptEvent>): string {
  if (events.length === 0) return "";
  return events.map((e) => JSON.stringify(e)).join("\n") + "\n";
}

export function parseJsonl(text: string): TranscriptEvent[] {
  const out: TranscriptEvent[] = [];
  for (const line of text.split("\n")) {
    if (line.trim().length === 0) continue;
    const obj = JSON.parse(line);
    if (typeof obj !== "object" || obj === null || typeof obj.event !== "string") {
      throw new Error("transcript line is not an event object");
    }
    out.push(obj as TranscriptEvent);
  }
  return out;
}

export function transcriptFilename(sessionId: string | null): string {
  return `session-${sessionId ?? "unsaved"}.transcript.jsonl`;
}
