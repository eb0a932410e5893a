// Pure state -> markup rendering. The browser shell assigns innerHTML and
// wires clicks by data attributes; tests assert on the markup itself.

import type { ConsoleState } from "./state.js";
import type {
  AppChoicePayload,
  DataConsentPayload,
  Grant,
  PendingRequest,
  PermissionPayload,
} from "./types.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function renderTranscript(state: ConsoleState): string {
  const rows = state.transcript.map(
    (entry) =>
      `<div class="msg msg-${entry.role}" data-seq="${entry.seq}">` +
      `<span class="who">${entry.role}</span>` +
      `<span class="text">${escapeHtml(entry.text)}</span></div>`,
  );
  if (state.busy) rows.push(`<div class="msg msg-status">working…</div>`);
  return rows.join("\n");
}

export function renderPermissionDialog(req: PendingRequest): string {
  const p = req.payload as unknown as PermissionPayload;
  const options = (p.options ?? []).filter(
    (option) => !(p.irreversible && option === "allow-always"),
  );
  const buttons = options
    .map(
      (option) =>
        `<button data-decision="${option}" data-cid="${p.correlation_id}">` +
        `${escapeHtml(option)}</button>`,
    )
    .join("");
  const assessment = p.assessment
    ? `<p class="assessment">${escapeHtml(p.assessment)}</p>`
    : "";
  return (
    `<div class="dialog permission" data-cid="${p.correlation_id}">` +
    `<h3>Permission needed</h3>` +
    `<pre class="preview">${escapeHtml(p.text)}</pre>` +
    assessment +
    `<div class="choices">${buttons}</div></div>`
  );
}

export function renderDataConsentDialog(req: PendingRequest): string {
  const p = req.payload as unknown as DataConsentPayload;
  return (
    `<div class="dialog consent" data-cid="${p.correlation_id}">` +
    `<h3>Share data with ${escapeHtml(p.app)}?</h3>` +
    `<p>${escapeHtml(p.entity)} = <code>${escapeHtml(p.value)}</code> ` +
    `(recorded from ${escapeHtml(p.attribution)})</p>` +
    `<div class="choices">` +
    `<button data-consent="yes" data-cid="${p.correlation_id}">Share</button>` +
    `<button data-consent="no" data-cid="${p.correlation_id}">Keep private</button>` +
    `</div></div>`
  );
}

export function renderAppChoiceDialog(req: PendingRequest): string {
  const p = req.payload as unknown as AppChoicePayload;
  const buttons = (p.candidates ?? [])
    .map(
      (app) =>
        `<button data-app="${escapeHtml(app)}" data-cid="${p.correlation_id}">` +
        `${escapeHtml(app)}</button>`,
    )
    .join("");
  return (
    `<div class="dialog app-choice" data-cid="${p.correlation_id}">` +
    `<h3>Choose an app</h3><p>${escapeHtml(p.reason ?? "")}</p>` +
    `<div class="choices">${buttons}` +
    `<button data-app="" data-cid="${p.correlation_id}">Cancel</button>` +
    `</div></div>`
  );
}

export function renderValueDialog(req: PendingRequest): string {
  const entity = String(req.payload.entity ?? "");
  const cid = req.correlationId;
  return (
    `<div class="dialog value" data-cid="${cid}">` +
    `<h3>The app needs ${escapeHtml(entity)}</h3>` +
    `<input data-value-for="${cid}" placeholder="value" />` +
    `<div class="choices">` +
    `<button data-value="send" data-cid="${cid}">Provide</button>` +
    `<button data-value="decline" data-cid="${cid}">Decline</button>` +
    `</div></div>`
  );
}

export function renderPending(state: ConsoleState): string {
  return state
    .pendingList()
    .map((req) => {
      switch (req.kind) {
        case "permission_request":
          return renderPermissionDialog(req);
        case "data_consent_request":
          return renderDataConsentDialog(req);
        case "app_choice_request":
          return renderAppChoiceDialog(req);
        case "value_request":
          return renderValueDialog(req);
        default:
          return "";
      }
    })
    .join("\n");
}

export function renderGrants(grants: Grant[]): string {
  if (!grants.length) return `<p class="empty">No live grants.</p>`;
  const rows = grants
    .map(
      (grant) =>
        `<tr data-grant="${grant.id}"><td>${escapeHtml(grant.kind)}</td>` +
        `<td>${escapeHtml(grant.subjects.join(" → "))}</td>` +
        `<td class="duration">${escapeHtml(grant.duration)}` +
        `${grant.duration === "session" ? " (expires with this session)" : ""}</td>` +
        `<td><button data-revoke="${grant.id}">Revoke</button></td></tr>`,
    )
    .join("");
  return `<table class="grants"><tr><th>kind</th><th>subjects</th><th>duration</th><th></th></tr>${rows}</table>`;
}

export function renderApps(state: ConsoleState): string {
  return state.apps
    .map(
      (app) =>
        `<div class="app" data-app-id="${escapeHtml(app.app_id)}">` +
        `<b>${escapeHtml(app.display_name)}</b> ` +
        `<span class="badge">${app.installed ? "installed" : "store"}</span>` +
        `<p>${escapeHtml(app.description)}</p></div>`,
    )
    .join("\n");
}

export function renderBanner(state: ConsoleState): string {
  return state.banner
    ? `<div class="banner">${escapeHtml(state.banner)} <button data-retry>Retry</button></div>`
    : "";
}
