// Browser bootstrap: wires the console app to the page.

import { ConsoleApp } from "./console.js";
import {
  renderApps,
  renderBanner,
  renderGrants,
  renderPending,
  renderTranscript,
} from "./view.js";

function el(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node;
}

const app = new ConsoleApp(window.location.origin, "browser");

function redraw(): void {
  el("transcript").innerHTML = renderTranscript(app.state);
  el("pending").innerHTML = renderPending(app.state);
  el("grants").innerHTML = renderGrants(app.state.grants);
  el("apps").innerHTML = renderApps(app.state);
  el("banner").innerHTML = renderBanner(app.state);
}

app.onChange = redraw;

el("pending").addEventListener("click", (ev) => {
  const target = ev.target as HTMLElement;
  const cid = target.dataset.cid;
  if (!cid) return;
  if (target.dataset.decision) void app.decidePermission(cid, target.dataset.decision);
  else if (target.dataset.consent)
    void app.decideDataConsent(cid, target.dataset.consent === "yes");
  else if (target.dataset.app !== undefined)
    void app.decideAppChoice(cid, target.dataset.app);
  else if (target.dataset.value) {
    const input = document.querySelector<HTMLInputElement>(
      `input[data-value-for="${cid}"]`,
    );
    void app.provideValue(
      cid,
      target.dataset.value === "send" ? (input?.value ?? "") : null,
    );
  }
});

el("grants").addEventListener("click", (ev) => {
  const target = ev.target as HTMLElement;
  if (target.dataset.revoke) void app.revokeGrant(target.dataset.revoke);
});

el("send").addEventListener("click", () => {
  const input = el("query") as HTMLInputElement;
  if (input.value.trim()) {
    void app.submitQuery(input.value.trim());
    input.value = "";
  }
});

el("refresh-grants").addEventListener("click", () => void app.refreshGrants());
el("refresh-apps").addEventListener("click", () => void app.refreshApps());

app.connect();
void app.refreshApps();
void app.refreshGrants();
setInterval(() => app.tick(), 1000);
