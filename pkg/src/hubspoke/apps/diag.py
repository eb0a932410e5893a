"""Diagnostic app that deliberately pokes at the sandbox walls.

Not part of the installable suite; the isolation tests run it to prove each
denial: out-of-jail reads die with the spoke, off-domain egress is blocked
at the proxy, and resource hogs are terminated by their limits.
"""

from __future__ import annotations

import os

from ..backend import ChatTurn, Rule
from ..manifest import HANDLERS, load_manifest
from ..sandbox import proxy_request
from . import tables
from .tables import app_is, is_final, is_spoke_plan, say, spoke_plan

SANDBOX_PROBE = load_manifest({
    "app_id": "sandbox_probe",
    "display_name": "Sandbox Probe",
    "description": "Diagnostics: attempts file reads, memory allocation, "
                   "and network egress on request.",
    "root_domain": "sandboxprobe.example",
    "tools": [
        {"name": "read_path", "params": {"path": "string"},
         "binding": "builtin:diag.read_path", "result_type": "string"},
        {"name": "hog_memory", "params": {"mib": "integer"},
         "binding": "builtin:diag.hog_memory", "result_type": "string"},
        {"name": "spin_cpu", "params": {}, "binding": "builtin:diag.spin_cpu",
         "result_type": "string"},
        {"name": "egress_probe", "params": {"host": "string"},
         "binding": "builtin:diag.egress_probe", "result_type": "string"},
        {"name": "write_big_file", "params": {"mib": "integer"},
         "binding": "builtin:diag.write_big_file", "result_type": "string"},
        {"name": "net_direct", "params": {"host": "string"},
         "binding": "builtin:diag.net_direct", "result_type": "string"},
    ],
    "functionalities": [],
    "irreversible_actions": [],
})


def _read_path(args: dict, fixtures_dir) -> str:
    with open(args["path"]) as fh:
        return fh.read(200)


def _hog_memory(args: dict, fixtures_dir) -> str:
    blob = bytearray(int(args.get("mib", 1024)) << 20)
    return f"allocated {len(blob)} bytes"


def _spin_cpu(args: dict, fixtures_dir) -> str:
    n = 0
    while True:
        n += 1


def _egress_probe(args: dict, fixtures_dir) -> str:
    proxy = os.environ.get("HUBSPOKE_PROXY", "")
    if not proxy:
        return "no proxy configured"
    verdict = proxy_request(proxy, args.get("host", ""), 443)
    return f"{verdict.get('decision')}:{verdict.get('reason')}"


def _write_big_file(args: dict, fixtures_dir) -> str:
    path = fixtures_dir / "blob.bin"
    with open(path, "wb") as fh:
        fh.write(b"\0" * (int(args.get("mib", 64)) << 20))
    return "wrote"


def _net_direct(args: dict, fixtures_dir) -> str:
    import socket

    s = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    s.close()
    return "socket created"


HANDLERS.register("diag.read_path", _read_path)
HANDLERS.register("diag.hog_memory", _hog_memory)
HANDLERS.register("diag.spin_cpu", _spin_cpu)
HANDLERS.register("diag.egress_probe", _egress_probe)
HANDLERS.register("diag.write_big_file", _write_big_file)
HANDLERS.register("diag.net_direct", _net_direct)


def _diag_plan(view) -> ChatTurn:
    q = tables.user_query(view).splitlines()[0]
    parts = q.split(None, 2)
    op = parts[1] if len(parts) > 1 else ""
    arg = parts[2] if len(parts) > 2 else ""
    step = None
    if op == "read":
        step = {"kind": "tool_call", "tool": "read_path", "args": {"path": arg}}
    elif op == "hog":
        step = {"kind": "tool_call", "tool": "hog_memory", "args": {"mib": int(arg or 1024)}}
    elif op == "spin":
        step = {"kind": "tool_call", "tool": "spin_cpu", "args": {}}
    elif op == "egress":
        step = {"kind": "tool_call", "tool": "egress_probe", "args": {"host": arg}}
    elif op == "bigfile":
        step = {"kind": "tool_call", "tool": "write_big_file", "args": {"mib": int(arg or 64)}}
    elif op == "net":
        step = {"kind": "tool_call", "tool": "net_direct", "args": {"host": arg}}
    steps = [step] if step else []
    steps.append({"kind": "final_answer"})
    return spoke_plan(steps)


def _diag_final(view) -> ChatTurn:
    notes = tables.final_notes(view)
    return say("; ".join(notes) if notes else "no-op")


def add_rules(rules: list[Rule]) -> None:
    rules.append(Rule("diag.plan",
                      lambda v: app_is(v, "sandbox_probe") and is_spoke_plan(v),
                      _diag_plan, priority=5))
    rules.append(Rule("diag.final",
                      lambda v: app_is(v, "sandbox_probe") and is_final(v),
                      _diag_final, priority=5))
