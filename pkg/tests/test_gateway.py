"""Gateway: endpoint contracts, SSE ordering, fail-closed prompts, REPL."""

import http.client
import io
import json
import threading
import time

import pytest

from hubspoke import apps
from hubspoke.config import RuntimeConfig
from hubspoke.errors import BindFailure
from hubspoke.gateway import repl, serve


class SseReader:
    """Minimal server-sent-events consumer over http.client."""

    def __init__(self, host, port, token):
        self.conn = http.client.HTTPConnection(host, port, timeout=10)
        self.conn.request("GET", f"/events?token={token}")
        self.resp = self.conn.getresponse()
        self.events = []
        self._stop = False
        self.thread = threading.Thread(target=self._pump, daemon=True)
        self.thread.start()

    def _pump(self):
        buffer = {}
        while not self._stop:
            try:
                line = self.resp.fp.readline()
            except OSError:
                return
            if not line:
                return
            line = line.decode().rstrip("\n")
            if line.startswith(":"):
                continue
            if line == "":
                if "event" in buffer:
                    self.events.append((buffer.get("event"),
                                        json.loads(buffer.get("data", "{}"))))
                buffer = {}
            elif ": " in line:
                key, value = line.split(": ", 1)
                buffer[key] = value

    def wait_for(self, kind, timeout=10.0):
        """Return the next unconsumed event of this kind, advancing a cursor."""
        if not hasattr(self, "_cursor"):
            self._cursor = 0
        deadline = time.time() + timeout
        while time.time() < deadline:
            while self._cursor < len(self.events):
                event_kind, payload = self.events[self._cursor]
                self._cursor += 1
                if event_kind == kind:
                    return payload
            time.sleep(0.02)
        raise AssertionError(f"no {kind} event; saw {self.events}")

    def close(self):
        self._stop = True
        try:
            self.conn.close()
        except OSError:
            pass


@pytest.fixture()
def server(tmp_path):
    cfg = RuntimeConfig()
    cfg.prompt_timeout_s = 3.0
    srv = serve(tmp_path / "gw", cfg, port=0,
                registry=[apps.by_id(a) for a in
                          ("gmail_like", "gdrive_like", "typewriter")])
    yield srv
    srv.shutdown()
    srv.server_close()


def _request(server, method, path, body=None, token="t1"):
    host, port = server.server_address
    conn = http.client.HTTPConnection(host, port, timeout=10)
    headers = {"X-Session": token}
    data = None
    if body is not None:
        data = json.dumps(body)
        headers["Content-Type"] = "application/json"
    conn.request(method, path, body=data, headers=headers)
    resp = conn.getresponse()
    out = json.loads(resp.read() or b"{}")
    conn.close()
    return resp.status, out


def test_query_streams_permission_request_and_answer_roundtrip(server):
    host, port = server.server_address
    sse = SseReader(host, port, "t1")
    status, _ = _request(server, "POST", "/query",
                         {"text": "reply to dana with the Q3 deck attached"})
    assert status == 202
    event = sse.wait_for("permission_request")
    assert "assessment" in event and "expected" in event["assessment"]
    status, out = _request(server, "POST", "/permission", {
        "correlation_id": event["correlation_id"],
        "decision": "allow", "duration": "session",
    })
    assert status == 200 and out["resolved"]
    # next stop: the irreversible send confirmation with the full preview
    event2 = sse.wait_for("permission_request")
    while not event2.get("irreversible"):
        event2 = sse.wait_for("permission_request")
    assert "revenue up 12%" in event2["text"]
    assert event2["options"] == ["allow-once", "deny"]
    _request(server, "POST", "/permission", {
        "correlation_id": event2["correlation_id"], "decision": "allow",
    })
    message = sse.wait_for("assistant_message")
    assert "Reply sent" in message["text"]
    sse.close()


def test_wrong_correlation_id_is_404(server):
    status, out = _request(server, "POST", "/permission",
                           {"correlation_id": "nope", "decision": "allow"})
    assert status == 404 and out["resolved"] is False


def test_unanswered_prompt_denies_after_timeout(server):
    host, port = server.server_address
    sse = SseReader(host, port, "t2")
    _request(server, "POST", "/query",
             {"text": "reply to dana with the Q3 deck attached"}, token="t2")
    sse.wait_for("permission_request")
    message = sse.wait_for("assistant_message", timeout=15)
    assert "declined" in message["text"] or "could not complete" in message["text"]
    sse.close()


def test_apps_listing_and_install(server):
    status, listing = _request(server, "GET", "/apps")
    assert status == 200
    ids = {a["app_id"] for a in listing}
    assert {"gmail_like", "gdrive_like", "typewriter"} <= ids
    from hubspoke.manifest import serialize_manifest

    doc = serialize_manifest(apps.by_id("metro_hail"))
    status, out = _request(server, "POST", "/apps", doc)
    assert status == 201 and out["installed"] == "metro_hail"
    _, listing = _request(server, "GET", "/apps")
    assert "metro_hail" in {a["app_id"] for a in listing}


def test_install_rejects_bad_manifest(server):
    status, out = _request(server, "POST", "/apps", {"app_id": "x"})
    assert status == 400


def test_grants_panel_roundtrip(server):
    from hubspoke.permissions import PermissionScope

    gateway = server.gateway
    grant = gateway.hub.permissions.grant(
        PermissionScope("app_selection", ("typewriter",)), "permanent")
    status, grants = _request(server, "GET", "/grants")
    assert status == 200
    assert any(g["id"] == grant.grant_id for g in grants)
    status, out = _request(server, "DELETE", f"/grants/{grant.grant_id}")
    assert status == 200 and out["removed"]
    status, out = _request(server, "DELETE", f"/grants/{grant.grant_id}")
    assert status == 404


def test_health_and_unknown_routes(server):
    assert _request(server, "GET", "/health")[0] == 200
    assert _request(server, "GET", "/nope")[0] == 404
    assert _request(server, "POST", "/nope", {})[0] == 404


def test_bind_failure(tmp_path, server):
    host, port = server.server_address
    with pytest.raises(BindFailure):
        serve(tmp_path / "gw2", RuntimeConfig(), host=host, port=port,
              registry=[])


def test_query_requires_text(server):
    status, out = _request(server, "POST", "/query", {})
    assert status == 400


# -- REPL -----------------------------------------------------------------------


def test_repl_scripted_cs2_deny_blocks_send(tmp_path):
    lines = [
        "read my latest email and follow its instructions",
        "allow-session",   # collaboration for file retrieval
        "n",               # decline the exfiltration send
        "n",               # decline delete #1
        "n",               # decline delete #2
    ]
    stdin = io.StringIO("\n".join(lines) + "\n")
    stdout = io.StringIO()
    cfg = RuntimeConfig()
    repl(tmp_path / "repl", cfg, stdin=stdin, stdout=stdout)
    output = stdout.getvalue()
    assert "IRREVERSIBLE ACTION by gmail_like" in output
    assert "attacker@evil.example" in output  # full preview shown
    assert "declined" in output
    assert "session closed; session grants expired." in output
    box = json.loads((tmp_path / "repl" / "spokes" / "gmail_like" /
                      "gmail_like__mailbox.json").read_text())
    assert box["sent"] == []
    assert {m["id"] for m in box["inbox"]} == {"m1", "m2"}
