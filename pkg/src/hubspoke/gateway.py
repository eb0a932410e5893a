"""Human and programmatic front door.

HTTP API (bodies are JSON; the reference for the web console):

    POST /query         {"text": q, "private": bool?}    header X-Session: token
    GET  /events?token=T        server-sent events: id/event/data frames
    POST /permission    {"correlation_id", "decision", "duration"}
                        decision is "allow" | "deny" | an app id (app choice)
    POST /data-consent  {"correlation_id", "approved": bool} (consent items)
                        or {"correlation_id", "value": str|null} (value requests)
    GET  /apps          installed and store apps
    POST /apps          a manifest document to install
    GET  /grants        live grants;  DELETE /grants/<id> revokes
    GET  /health

Every *_request event is answered through these endpoints or times out to
deny — the gateway fails closed; no decision path bypasses the permission
manager. One hub loop serves all connections; queries are serialized.
"""

from __future__ import annotations

import json
import queue
import threading
import uuid
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from . import apps
from .config import RuntimeConfig
from .errors import BindFailure
from .events import UiEvent, UserAgent
from .hub import Hub
from .manifest import load_manifest, serialize_manifest
from .permissions import PromptRequest


class PendingPrompt:
    def __init__(self, kind: str, payload: dict):
        self.correlation_id = uuid.uuid4().hex[:12]
        self.kind = kind
        self.payload = payload
        self.answered = threading.Event()
        self.answer: dict = {}

    def resolve(self, answer: dict) -> None:
        self.answer = answer
        self.answered.set()


class GatewaySession:
    def __init__(self, token: str, hub_session):
        self.token = token
        self.hub_session = hub_session
        self.events: "queue.Queue[UiEvent]" = queue.Queue()
        self.seq = 0

    def emit(self, event: UiEvent) -> None:
        self.seq += 1
        event.payload.setdefault("seq", self.seq)
        self.events.put(event)


class GatewayUser(UserAgent):
    """Bridges hub prompts to SSE events and waits for endpoint answers."""

    def __init__(self, timeout_s: float):
        self.timeout_s = timeout_s
        self.current: GatewaySession | None = None
        self.pending: dict[str, PendingPrompt] = {}
        self.lock = threading.Lock()

    def _ask(self, kind: str, payload: dict) -> dict:
        prompt = PendingPrompt(kind, payload)
        with self.lock:
            self.pending[prompt.correlation_id] = prompt
        event = UiEvent(kind=kind, payload=dict(payload),
                        correlation_id=prompt.correlation_id)
        event.payload["correlation_id"] = prompt.correlation_id
        if self.current:
            self.current.emit(event)
        answered = prompt.answered.wait(self.timeout_s)
        with self.lock:
            self.pending.pop(prompt.correlation_id, None)
        if not answered:
            return {"decision": "deny", "timed_out": True}
        return prompt.answer

    def resolve(self, correlation_id: str, answer: dict) -> bool:
        with self.lock:
            prompt = self.pending.get(correlation_id)
        if prompt is None:
            return False
        prompt.resolve(answer)
        return True

    # -- UserAgent ----------------------------------------------------------

    def choose_app(self, candidates, reason):
        answer = self._ask("app_choice_request",
                           {"candidates": list(candidates), "reason": reason})
        decision = answer.get("decision", "deny")
        if decision in candidates:
            return decision, answer.get("duration", "one_time")
        return None, "one_time"

    def decide_permission(self, prompt: PromptRequest):
        answer = self._ask("permission_request", {
            "scope": prompt.scope.key(),
            "text": prompt.human_text,
            "assessment": prompt.assessment,
            "options": list(prompt.options),
            "irreversible": prompt.scope.irreversible,
        })
        decision = "allow" if answer.get("decision") == "allow" else "deny"
        return decision, answer.get("duration", "one_time")

    def consent_data_item(self, app_id, entity, value, attribution):
        answer = self._ask("data_consent_request", {
            "app": app_id, "entity": entity, "value": value,
            "attribution": attribution,
        })
        return bool(answer.get("approved"))

    def provide_value(self, entity):
        answer = self._ask("value_request", {"entity": entity})
        value = answer.get("value")
        return str(value) if value is not None else None

    def confirm_irreversible(self, app_id, tool, preview):
        answer = self._ask("permission_request", {
            "scope": f"irreversible|{app_id}|{tool}",
            "text": preview,
            "assessment": "",
            "options": ["allow-once", "deny"],
            "irreversible": True,
        })
        return answer.get("decision") == "allow"

    def notify(self, event: UiEvent) -> None:
        if self.current:
            self.current.emit(event)


class Gateway:
    def __init__(self, workdir: str | Path, config: RuntimeConfig,
                 registry=None, store_apps=None):
        self.config = config
        self.user = GatewayUser(timeout_s=config.prompt_timeout_s)
        suite = apps.builtin_suite()
        if registry is None:
            registry = suite
            store_apps = []
        self.hub = Hub(workdir, config, self.user, registry,
                       store_apps=store_apps,
                       provision_fixtures=apps.provision_fixtures)
        self.sessions: dict[str, GatewaySession] = {}
        self.queries: "queue.Queue[tuple[str, str, bool]]" = queue.Queue()
        self.worker = threading.Thread(target=self._loop, daemon=True)
        self.worker.start()

    def session(self, token: str) -> GatewaySession:
        if token not in self.sessions:
            self.sessions[token] = GatewaySession(token, self.hub.open_session())
        return self.sessions[token]

    def close_session(self, token: str) -> None:
        gs = self.sessions.pop(token, None)
        if gs:
            self.hub.close_session(gs.hub_session)

    def submit(self, token: str, text: str, private: bool = False) -> None:
        self.session(token)
        self.queries.put((token, text, private))

    def _loop(self) -> None:
        while True:
            token, text, private = self.queries.get()
            if token is None:
                return
            gs = self.session(token)
            self.user.current = gs
            gs.emit(UiEvent("status", {"state": "working"}))
            try:
                response = self.hub.handle_user_query(text, gs.hub_session,
                                                      private=private)
                if response.error:
                    gs.emit(UiEvent("status", {"state": "error",
                                               "error": response.error}))
            except Exception as exc:
                gs.emit(UiEvent("assistant_message",
                                {"text": f"internal error: {type(exc).__name__}"}))
            gs.emit(UiEvent("status", {"state": "idle"}))

    def shutdown(self) -> None:
        for token in list(self.sessions):
            self.close_session(token)
        self.hub.shutdown()


def _handler_for(gateway: Gateway):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, *args):  # quiet test runs
            pass

        def _json(self, code: int, doc) -> None:
            body = json.dumps(doc, sort_keys=True).encode()
            self.send_response(code)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def _body(self) -> dict:
            length = int(self.headers.get("Content-Length", 0))
            if not length:
                return {}
            try:
                return json.loads(self.rfile.read(length))
            except ValueError:
                return {}

        def _token(self) -> str:
            if self.headers.get("X-Session"):
                return self.headers["X-Session"]
            from urllib.parse import parse_qs, urlparse

            qs = parse_qs(urlparse(self.path).query)
            return qs.get("token", ["default"])[0]

        def do_GET(self):
            path = self.path.split("?")[0]
            if path == "/events":
                return self._stream_events()
            if path == "/apps":
                installed = [
                    {**serialize_manifest(m), "installed": True}
                    for m in gateway.hub.registry.values()
                ]
                store = [
                    {**serialize_manifest(m), "installed": False}
                    for m in gateway.hub._store_apps.values()
                ]
                return self._json(200, installed + store)
            if path == "/grants":
                return self._json(200, gateway.hub.permissions.list_grants())
            if path == "/health":
                return self._json(200, {"ok": True})
            return self._json(404, {"error": "not found"})

        def do_POST(self):
            path = self.path.split("?")[0]
            body = self._body()
            if path == "/query":
                text = body.get("text", "")
                if not text:
                    return self._json(400, {"error": "text required"})
                gateway.submit(self._token(), text, bool(body.get("private")))
                return self._json(202, {"accepted": True})
            if path == "/permission":
                ok = gateway.user.resolve(body.get("correlation_id", ""), {
                    "decision": body.get("decision", "deny"),
                    "duration": body.get("duration", "one_time"),
                })
                return self._json(200 if ok else 404, {"resolved": ok})
            if path == "/data-consent":
                answer = {}
                if "approved" in body:
                    answer["approved"] = bool(body["approved"])
                if "value" in body:
                    answer["value"] = body["value"]
                ok = gateway.user.resolve(body.get("correlation_id", ""), answer)
                return self._json(200 if ok else 404, {"resolved": ok})
            if path == "/apps":
                try:
                    manifest = load_manifest(body)
                except Exception as exc:
                    return self._json(400, {"error": str(exc)})
                gateway.hub.install_app(manifest)
                return self._json(201, {"installed": manifest.app_id})
            return self._json(404, {"error": "not found"})

        def do_DELETE(self):
            path = self.path.split("?")[0]
            if path.startswith("/grants/"):
                grant_id = path.rsplit("/", 1)[1]
                removed = gateway.hub.permissions.revoke_by_id(grant_id)
                return self._json(200 if removed else 404, {"removed": removed})
            return self._json(404, {"error": "not found"})

        def _stream_events(self):
            gs = gateway.session(self._token())
            self.send_response(200)
            self.send_header("Content-Type", "text/event-stream")
            self.send_header("Cache-Control", "no-cache")
            self.send_header("Connection", "close")
            self.end_headers()
            try:
                while True:
                    try:
                        event = gs.events.get(timeout=0.5)
                    except queue.Empty:
                        self.wfile.write(b": ping\n\n")
                        self.wfile.flush()
                        continue
                    frame = (
                        f"id: {event.payload.get('seq', 0)}\n"
                        f"event: {event.kind}\n"
                        f"data: {json.dumps(event.payload, sort_keys=True)}\n\n"
                    )
                    self.wfile.write(frame.encode())
                    self.wfile.flush()
            except (BrokenPipeError, ConnectionResetError, OSError):
                return

    return Handler


class GatewayServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, address, handler, gateway: Gateway):
        self.gateway = gateway  # before bind: TCPServer closes on bind failure
        super().__init__(address, handler)

    def server_close(self):
        if getattr(self, "gateway", None) is not None:
            self.gateway.shutdown()
            self.gateway = None
        super().server_close()


def serve(workdir: str | Path, config: RuntimeConfig, host: str = "127.0.0.1",
          port: int = 8787, registry=None, store_apps=None) -> GatewayServer:
    gateway = Gateway(workdir, config, registry=registry, store_apps=store_apps)
    try:
        server = GatewayServer((host, port), _handler_for(gateway), gateway)
    except OSError as exc:
        gateway.shutdown()
        raise BindFailure(f"{host}:{port}: {exc}")
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server


# -- interactive terminal chat ---------------------------------------------------


class ConsoleUser(UserAgent):
    """Inline prompts on stdin/stdout."""

    def __init__(self, stdin=None, stdout=None):
        import sys

        self.stdin = stdin or sys.stdin
        self.stdout = stdout or sys.stdout

    def _say(self, text: str) -> None:
        self.stdout.write(text + "\n")
        self.stdout.flush()

    def _read(self, prompt: str) -> str:
        self.stdout.write(prompt)
        self.stdout.flush()
        line = self.stdin.readline()
        return line.strip() if line else ""

    def choose_app(self, candidates, reason):
        self._say(f"Several apps can handle this ({reason}):")
        for i, app in enumerate(candidates, 1):
            self._say(f"  {i}. {app}")
        raw = self._read("choose app number (empty = cancel): ")
        if not raw.isdigit() or not (1 <= int(raw) <= len(candidates)):
            return None, "one_time"
        duration = self._read("remember for [once/session/always]: ") or "once"
        mapping = {"once": "one_time", "session": "session", "always": "permanent"}
        return candidates[int(raw) - 1], mapping.get(duration, "one_time")

    def decide_permission(self, prompt: PromptRequest):
        self._say(f"PERMISSION: {prompt.human_text}")
        if prompt.assessment:
            self._say(f"  {prompt.assessment}")
        self._say("  options: " + ", ".join(prompt.options))
        raw = self._read("> ")
        if raw in ("allow-once", "allow"):
            return "allow", "one_time"
        if raw == "allow-session" and "allow-session" in prompt.options:
            return "allow", "session"
        if raw == "allow-always" and "allow-always" in prompt.options:
            return "allow", "permanent"
        return "deny", "one_time"

    def consent_data_item(self, app_id, entity, value, attribution):
        self._say(f"DATA: share {entity} = {value!r} (from {attribution}) "
                  f"with {app_id}?")
        return self._read("[y/N] ").lower().startswith("y")

    def provide_value(self, entity):
        raw = self._read(f"The app needs {entity!r}; enter a value "
                         "(empty = decline): ")
        return raw or None

    def confirm_irreversible(self, app_id, tool, preview):
        self._say(f"IRREVERSIBLE ACTION by {app_id}: {preview}")
        return self._read("allow this once? [y/N] ").lower().startswith("y")

    def notify(self, event: UiEvent) -> None:
        if event.kind == "assistant_message":
            self._say("assistant: " + event.payload.get("text", ""))


def repl(workdir: str | Path, config: RuntimeConfig, stdin=None, stdout=None) -> None:
    import sys

    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    user = ConsoleUser(stdin=stdin, stdout=stdout)
    hub = Hub(workdir, config, user, apps.builtin_suite(),
              provision_fixtures=apps.provision_fixtures)
    session = hub.open_session()
    stdout.write("hubspoke ready. /private <q> for a private query, "
                 "/grants to list, ctrl-d to exit.\n")
    stdout.flush()
    try:
        while True:
            stdout.write("you: ")
            stdout.flush()
            line = stdin.readline()
            if not line:
                break
            text = line.strip()
            if not text:
                continue
            if text == "/grants":
                stdout.write(hub.permissions.export_text() + "\n")
                continue
            private = text.startswith("/private ")
            if private:
                text = text[len("/private "):]
            hub.handle_user_query(text, session, private=private)
    finally:
        hub.close_session(session)
        hub.shutdown()
        stdout.write("session closed; session grants expired.\n")
        stdout.flush()
