"""Spoke process entry point.

Order is load-bearing: imports, then resource limits, then the seccomp deny
list, then the filesystem guard, then the sandbox report frame — all before
the init record (and therefore before any app or backend code) is accepted.
A policy that cannot be applied is reported and the process exits; the hub
treats that as LaunchFailure.
"""

from __future__ import annotations

import argparse
import errno as errno_mod
import json
import sys
import traceback

from . import apps as _apps  # registers tool handlers and scripted tables
from .backend import BackendSpec, make_backend
from .channel import KIND_ISC_FAIL, KIND_ISC_REPLY, KIND_ISC_REQUEST, KIND_JSON, from_fd
from .errors import UserDeclined
from .isc import (
    FormatResponse,
    FunctionalityDescriptor,
    Probe,
    Request,
    Response,
    decode_envelope,
    encode_envelope,
    parse_format_text,
    validate_message,
)
from .manifest import load_manifest
from .memory import MemoryStore
from .sandbox import (
    SandboxPolicy,
    SandboxViolation,
    apply_rlimits,
    apply_seccomp_denylist,
    audit_descriptors,
    install_fs_guard,
)
from .spoke import HubPort, SpokeRuntime


class ChannelHubPort(HubPort):
    """Nested request-reply toward the hub over the sole channel.

    ISC traffic travels as the bit-exact wire records; this operator
    validates its own outbound requests and every inbound reply against the
    formats learned from the probe, before anything reaches the backend.
    """

    def __init__(self, channel, sid: str = "", string_limit: int = 256):
        self.channel = channel
        self.sid = sid
        self.string_limit = string_limit
        self._next_id = 0
        self._probes: dict[str, dict] = {}

    def _roundtrip(self, msg: dict) -> dict:
        self._next_id += 1
        msg["id"] = f"n{self._next_id}"
        self.channel.send_json(msg)
        reply = self.channel.recv_json()
        if reply.get("kind") != "reply" or reply.get("id") != msg["id"]:
            raise RuntimeError(f"hub protocol violation: {reply}")
        return reply

    def ask_user_data(self, entity: str) -> str | None:
        reply = self._roundtrip({"kind": "ask_user_data", "entity": entity})
        return reply.get("value")

    def confirm_irreversible(self, tool: str, preview: str) -> bool:
        reply = self._roundtrip({"kind": "confirm_irreversible", "tool": tool,
                                 "preview": preview})
        return bool(reply.get("approved"))

    def isc_probe(self, functionality: str) -> dict | None:
        if functionality in self._probes:
            return self._probes[functionality]
        record = encode_envelope(Probe(sid=self.sid, functionality=functionality))
        self.channel.send(KIND_ISC_REQUEST, record)
        kind, payload = self.channel.recv()
        if kind == KIND_ISC_FAIL:
            return None
        env = decode_envelope(payload)
        if not isinstance(env, FormatResponse):
            return None
        probe = {
            "sid": env.sid,
            "request_format": env.request_format,
            "response_format": env.response_format,
        }
        self._probes[functionality] = probe
        return probe

    def _descriptor(self, functionality: str, probe: dict):
        request_fields = parse_format_text(probe["request_format"])
        response_fields = parse_format_text(probe["response_format"])
        if request_fields is None or response_fields is None:
            return None
        return FunctionalityDescriptor(name=functionality,
                                       request_fields=request_fields,
                                       response_fields=response_fields)

    def isc_request(self, functionality: str, payload: dict) -> dict | str:
        probe = self.isc_probe(functionality)
        if probe is None:
            return "NO_PROVIDER"
        descriptor = self._descriptor(functionality, probe)
        if descriptor is None:
            return "MALFORMED_FIELD"
        # order the payload exactly as the learned request format
        ordered = {name: payload.get(name) for name, _ in descriptor.request_fields
                   if name in payload}
        for key in payload:
            if key not in ordered:
                ordered[key] = payload[key]
        request = Request(sid=probe["sid"], functionality=functionality,
                          payload=ordered)
        verdict = validate_message(request, descriptor, self.string_limit)
        if not verdict:  # sender-operator validation: never ship a bad record
            return f"MALFORMED_FIELD:{verdict.reason}"
        self.channel.send(KIND_ISC_REQUEST, encode_envelope(request))
        kind, data = self.channel.recv()
        if kind == KIND_ISC_FAIL:
            return data.decode("ascii", "replace")
        env = decode_envelope(data)
        if not isinstance(env, Response):
            return "MALFORMED_REPLY"
        verdict = validate_message(env, descriptor, self.string_limit)
        if not verdict:  # receiver-side validation of the reply
            return f"MALFORMED_FIELD:{verdict.reason}"
        return env.payload


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--channel-fd", type=int, required=True)
    parser.add_argument("--private-dir", required=True)
    parser.add_argument("--policy", required=True)
    parser.add_argument("--proxy", default="")
    args = parser.parse_args(argv)

    channel = from_fd(args.channel_fd)
    policy = SandboxPolicy.from_json(args.policy)

    applied: dict = {}
    try:
        applied["rlimits"] = apply_rlimits(policy)
        canary = bytearray(4 << 20)  # an unworkable memory policy fails here
        del canary
        applied["seccomp"] = apply_seccomp_denylist() if policy.enable_seccomp else False
        install_fs_guard(args.private_dir)
        applied["fs_guard"] = "audit-hook"
        fd_audit = audit_descriptors(args.channel_fd)
    except Exception as exc:
        channel.send_json({"kind": "sandbox_report", "ok": False, "error": str(exc)})
        return 1

    # OS-grade filesystem confinement is unavailable here; say so.
    isolation = "reduced"
    channel.send_json({
        "kind": "sandbox_report",
        "ok": fd_audit["sockets"] == 1 and fd_audit["listening"] == 0,
        "applied": applied,
        "isolation": isolation,
        "fd_audit": fd_audit,
    })

    init = channel.recv_json()
    if init.get("kind") != "init":
        return 1
    manifest = load_manifest(init["manifest"]) if init.get("manifest") else None
    mode = init.get("mode", "standard")
    cfg = init.get("config", {})
    spec = BackendSpec(
        kind="scripted",
        table_id=cfg.get("table_id", "builtin"),
        seed=int(cfg.get("seed", 0)),
        context_window_tokens=int(cfg.get("context_window_tokens", 8192)),
    )
    if manifest and manifest.backend_override:
        spec = manifest.backend_override
    backend = make_backend(spec)
    memory = MemoryStore(f"{args.private_dir}/memory",
                         principal=manifest.app_id if manifest else "vanilla")
    hub_port = ChannelHubPort(channel, sid=init.get("sid", ""),
                              string_limit=int(cfg.get("string_limit", 256)))
    runtime = SpokeRuntime(
        manifest=manifest,
        mode=mode,
        backend=backend,
        memory=memory,
        hub=hub_port,
        available_functionalities=init.get("functionalities", []),
        private_dir=args.private_dir,
        recent_window=int(cfg.get("recent_window", 10)),
        token_budget=int(cfg.get("token_budget", 2048)),
    )
    import os

    if args.proxy:
        os.environ["HUBSPOKE_PROXY"] = args.proxy

    string_limit = int(cfg.get("string_limit", 256))

    while True:
        try:
            kind, payload = channel.recv()
        except Exception:
            return 0
        if kind == KIND_JSON:
            msg = json.loads(payload)
            if msg.get("kind") == "shutdown":
                channel.send_json({"kind": "bye"})
                return 0
            if msg.get("kind") == "invoke":
                outcome = _invoke(runtime, msg, int(cfg.get("summarize_every", 0)))
                channel.send_json({"kind": "result", "id": msg.get("id"),
                                   "outcome": outcome})
        elif kind == KIND_ISC_REQUEST:
            env = decode_envelope(payload)
            if not isinstance(env, Request):
                channel.send(KIND_ISC_FAIL, b"MALFORMED_FIELD")
                continue
            descriptor = None
            if manifest:
                descriptor = next(
                    (d for d in manifest.functionality_descriptors
                     if d.name == env.functionality), None)
            if descriptor is None:
                channel.send(KIND_ISC_FAIL, b"NO_PROVIDER")
                continue
            response, reason, tools = runtime.serve_isc(env, descriptor, string_limit)
            channel.send_json({"kind": "isc_tools", "tools": tools})
            if response is None:
                channel.send(KIND_ISC_FAIL, reason.encode("ascii", "replace"))
            else:
                channel.send(KIND_ISC_REPLY, encode_envelope(response))


def _phase_counts(runtime: SpokeRuntime) -> dict:
    out = {"planning": 0, "execution": 0, "memory": 0}
    for c in runtime.backend.calls:
        out[c["phase"]] = out.get(c["phase"], 0) + 1
    return out


def _invoke(runtime: SpokeRuntime, msg: dict, summarize_every: int) -> dict:
    from .harness import PHASE_UNIT_SECONDS

    before = _phase_counts(runtime)
    try:
        context = runtime.memory.build_working_memory(
            msg.get("query", ""), runtime.recent_window, runtime.token_budget,
            private=(runtime.mode == "private"),
        )
        outcome = runtime.handle_invocation(
            msg.get("query", ""),
            [(k, v) for k, v in msg.get("bootstrap", [])],
            context,
        )
        if runtime.mode != "private" and not outcome.error:
            recent = runtime.memory.records()[-2:]
            runtime.memory.extract_entities(recent, runtime.backend,
                                            runtime._attribution())
            if summarize_every and runtime.memory.max_seq % summarize_every == 0:
                runtime.memory.summarize(runtime._attribution(), runtime.backend)
        after = _phase_counts(runtime)
        return {
            "response": outcome.response,
            "tool_trace": outcome.tool_trace,
            "step_trace": outcome.step_trace,
            "pending": outcome.pending,
            "error": outcome.error,
            "metrics": {
                "backend_calls": {k: after[k] - before[k] for k in after},
                "phase_seconds": {
                    k: round((after[k] - before[k]) * PHASE_UNIT_SECONDS[k], 6)
                    for k in after
                },
            },
        }
    except UserDeclined as exc:
        return {"response": f"Stopped: permission declined ({exc}).",
                "tool_trace": [], "step_trace": [], "pending": "none",
                "error": "user_declined", "metrics": {}}
    except (MemoryError, SandboxViolation):
        # policy violations terminate the spoke; the hub sees the crash
        raise
    except OSError as exc:
        if exc.errno == errno_mod.EFBIG:
            raise
        traceback.print_exc()
        return {"response": "", "tool_trace": [], "step_trace": [],
                "pending": "none", "error": f"OSError: {exc}",
                "metrics": {}}
    except Exception as exc:
        traceback.print_exc()
        return {"response": "", "tool_trace": [], "step_trace": [],
                "pending": "none", "error": f"{type(exc).__name__}: {exc}",
                "metrics": {}}


if __name__ == "__main__":
    sys.exit(main())
