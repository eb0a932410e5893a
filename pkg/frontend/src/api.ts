// Gateway HTTP client. Every decision round-trips here; there is no
// client-side authorization and no optimistic permission state.

import type { AppInfo, Grant } from "./types.js";

export class GatewayApi {
  constructor(readonly baseUrl: string, readonly token: string) {}

  private async post(path: string, body: unknown): Promise<Response> {
    return fetch(`${this.baseUrl}${path}`, {
      method: "POST",
      headers: { "Content-Type": "application/json", "X-Session": this.token },
      body: JSON.stringify(body),
    });
  }

  async submitQuery(text: string, priv = false): Promise<void> {
    const resp = await this.post("/query", { text, private: priv });
    if (resp.status !== 202) throw new Error(`query rejected: ${resp.status}`);
  }

  async answerPermission(
    correlationId: string,
    decision: string,
    duration: string,
  ): Promise<boolean> {
    const resp = await this.post("/permission", {
      correlation_id: correlationId,
      decision,
      duration,
    });
    if (resp.status === 404) return false;
    if (!resp.ok) throw new Error(`permission answer failed: ${resp.status}`);
    return true;
  }

  async answerDataConsent(correlationId: string, approved: boolean): Promise<boolean> {
    const resp = await this.post("/data-consent", {
      correlation_id: correlationId,
      approved,
    });
    if (resp.status === 404) return false;
    if (!resp.ok) throw new Error(`consent answer failed: ${resp.status}`);
    return true;
  }

  async answerValue(correlationId: string, value: string | null): Promise<boolean> {
    const resp = await this.post("/data-consent", {
      correlation_id: correlationId,
      value,
    });
    if (resp.status === 404) return false;
    if (!resp.ok) throw new Error(`value answer failed: ${resp.status}`);
    return true;
  }

  async listApps(): Promise<AppInfo[]> {
    const resp = await fetch(`${this.baseUrl}/apps`);
    if (!resp.ok) throw new Error(`apps listing failed: ${resp.status}`);
    return (await resp.json()) as AppInfo[];
  }

  async installApp(manifest: Record<string, unknown>): Promise<void> {
    const resp = await this.post("/apps", manifest);
    if (resp.status !== 201) throw new Error(`install failed: ${resp.status}`);
  }

  async listGrants(): Promise<Grant[]> {
    const resp = await fetch(`${this.baseUrl}/grants`);
    if (!resp.ok) throw new Error(`grants listing failed: ${resp.status}`);
    return (await resp.json()) as Grant[];
  }

  async revokeGrant(id: string): Promise<boolean> {
    const resp = await fetch(`${this.baseUrl}/grants/${encodeURIComponent(id)}`, {
      method: "DELETE",
    });
    return resp.status === 200;
  }
}
