// Orchestration: one event-stream consumer feeding the state store, and
// decision methods that round-trip to the gateway before touching state.
// Optimistic permission state is forbidden: a dialog closes only after the
// gateway acknowledged the answer (or the deadline passed).

import { GatewayApi } from "./api.js";
import { ConsoleState } from "./state.js";
import { subscribeEvents, type SseHandle } from "./sse.js";
import type { GatewayEvent } from "./types.js";

export class ConsoleApp {
  readonly state: ConsoleState;
  readonly api: GatewayApi;
  private sse: SseHandle | null = null;
  private querySeq = 0;
  onChange: () => void = () => {};

  constructor(baseUrl: string, token: string, promptTimeoutMs = 60_000) {
    this.api = new GatewayApi(baseUrl, token);
    this.state = new ConsoleState(promptTimeoutMs);
  }

  connect(): void {
    this.sse = subscribeEvents(
      this.api.baseUrl,
      this.api.token,
      (event) => this.handleEvent(event),
      () => {
        this.state.banner = "event stream lost";
        this.onChange();
      },
    );
  }

  disconnect(): void {
    this.sse?.close();
    this.sse = null;
  }

  handleEvent(event: GatewayEvent): void {
    this.state.apply(event);
    this.onChange();
  }

  tick(now = Date.now()): void {
    // closing at the deadline mirrors the gateway's own fail-closed deny
    if (this.state.expirePending(now).length) this.onChange();
  }

  async submitQuery(text: string): Promise<void> {
    this.querySeq += 1;
    this.state.pushTranscript(-1000 + this.querySeq, "user", text);
    this.onChange();
    try {
      await this.api.submitQuery(text);
      this.state.banner = "";
    } catch (err) {
      this.state.banner = `query failed: ${String(err)}`;
    }
    this.onChange();
  }

  async decidePermission(correlationId: string, option: string): Promise<void> {
    const decision = option.startsWith("allow") ? "allow" : "deny";
    const duration =
      option === "allow-always"
        ? "permanent"
        : option === "allow-session"
          ? "session"
          : "one_time";
    await this.answer(correlationId, () =>
      this.api.answerPermission(correlationId, decision, duration),
    );
  }

  async decideAppChoice(correlationId: string, app: string): Promise<void> {
    await this.answer(correlationId, () =>
      this.api.answerPermission(correlationId, app || "deny", "one_time"),
    );
  }

  async decideDataConsent(correlationId: string, approved: boolean): Promise<void> {
    await this.answer(correlationId, () =>
      this.api.answerDataConsent(correlationId, approved),
    );
  }

  async provideValue(correlationId: string, value: string | null): Promise<void> {
    await this.answer(correlationId, () => this.api.answerValue(correlationId, value));
  }

  private async answer(
    correlationId: string,
    post: () => Promise<boolean>,
  ): Promise<void> {
    try {
      const resolved = await post();
      // answered or already expired server-side: either way it is settled
      this.state.answered(correlationId);
      if (!resolved) this.state.banner = "that request had already expired";
      else this.state.banner = "";
    } catch (err) {
      // network failure: keep the dialog, show a retry banner, never
      // default to allow
      this.state.banner = `could not deliver your decision: ${String(err)}`;
    }
    this.onChange();
  }

  async refreshGrants(): Promise<void> {
    this.state.grants = await this.api.listGrants();
    this.onChange();
  }

  async revokeGrant(id: string): Promise<void> {
    await this.api.revokeGrant(id);
    await this.refreshGrants();
  }

  async refreshApps(): Promise<void> {
    this.state.apps = await this.api.listApps();
    this.onChange();
  }
}
