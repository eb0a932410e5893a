// Console state: transcript ordered by event seq, pending requests keyed
// by correlation id. A pending request leaves the map exactly when it is
// answered or when its deadline passes (the gateway denies server-side at
// its own timeout; the dialog closes as denied).

import type { GatewayEvent, Grant, AppInfo, PendingRequest, TranscriptEntry } from "./types.js";

export const PROMPT_KINDS = new Set([
  "permission_request",
  "data_consent_request",
  "app_choice_request",
  "value_request",
]);

export class ConsoleState {
  transcript: TranscriptEntry[] = [];
  pending = new Map<string, PendingRequest>();
  apps: AppInfo[] = [];
  grants: Grant[] = [];
  banner = "";
  busy = false;

  constructor(readonly promptTimeoutMs = 60_000) {}

  apply(event: GatewayEvent, now = Date.now()): void {
    if (event.kind === "assistant_message") {
      this.pushTranscript(event.seq, "assistant", String(event.payload.text ?? ""));
    } else if (event.kind === "status") {
      this.busy = event.payload.state === "working";
    } else if (PROMPT_KINDS.has(event.kind)) {
      const correlationId = String(event.payload.correlation_id ?? "");
      if (!correlationId) return;
      this.pending.set(correlationId, {
        correlationId,
        kind: event.kind,
        payload: event.payload,
        deadline: now + this.promptTimeoutMs,
      });
    }
  }

  pushTranscript(seq: number, role: TranscriptEntry["role"], text: string): void {
    this.transcript.push({ seq, role, text });
    this.transcript.sort((a, b) => a.seq - b.seq);
  }

  answered(correlationId: string): void {
    this.pending.delete(correlationId);
  }

  expirePending(now = Date.now()): string[] {
    const expired: string[] = [];
    for (const [key, req] of this.pending) {
      if (req.deadline <= now) {
        expired.push(key);
        this.pending.delete(key);
      }
    }
    return expired;
  }

  pendingList(): PendingRequest[] {
    return [...this.pending.values()];
  }
}
