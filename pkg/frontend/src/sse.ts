// Server-sent-events consumer over fetch streaming, usable in browsers and
// node alike (node has no native EventSource).

import type { GatewayEvent, EventKind } from "./types.js";

export interface SseHandle {
  close(): void;
  done: Promise<void>;
}

export function subscribeEvents(
  baseUrl: string,
  token: string,
  onEvent: (event: GatewayEvent) => void,
  onError?: (err: unknown) => void,
): SseHandle {
  const controller = new AbortController();
  const done = (async () => {
    try {
      const resp = await fetch(`${baseUrl}/events?token=${encodeURIComponent(token)}`, {
        signal: controller.signal,
      });
      if (!resp.ok || !resp.body) {
        throw new Error(`event stream failed: ${resp.status}`);
      }
      const reader = resp.body.getReader();
      const decoder = new TextDecoder();
      let buffer = "";
      for (;;) {
        const { done: eof, value } = await reader.read();
        if (eof) break;
        buffer += decoder.decode(value, { stream: true });
        let sep;
        while ((sep = buffer.indexOf("\n\n")) >= 0) {
          const frame = buffer.slice(0, sep);
          buffer = buffer.slice(sep + 2);
          const event = parseFrame(frame);
          if (event) onEvent(event);
        }
      }
    } catch (err) {
      if (!controller.signal.aborted && onError) onError(err);
    }
  })();
  return { close: () => controller.abort(), done };
}

export function parseFrame(frame: string): GatewayEvent | null {
  let id = 0;
  let kind = "";
  let data = "";
  for (const line of frame.split("\n")) {
    if (line.startsWith(":")) continue; // heartbeat
    const colon = line.indexOf(": ");
    if (colon < 0) continue;
    const field = line.slice(0, colon);
    const value = line.slice(colon + 2);
    if (field === "id") id = Number(value);
    else if (field === "event") kind = value;
    else if (field === "data") data = value;
  }
  if (!kind) return null;
  let payload: Record<string, unknown> = {};
  try {
    payload = data ? JSON.parse(data) : {};
  } catch {
    return null;
  }
  const seq = typeof payload.seq === "number" ? (payload.seq as number) : id;
  return { kind: kind as EventKind, seq, payload };
}
