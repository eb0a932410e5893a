"""Process confinement: launch reports, the denial triad, resource kills."""

import json

import pytest

from hubspoke import apps
from hubspoke.config import RuntimeConfig
from hubspoke.errors import InvalidHost, LaunchFailure
from hubspoke.events import ScriptedUser
from hubspoke.hub import Hub
from hubspoke.sandbox import NetworkPolicy, SandboxPolicy, guard_egress, launch_isolated
from hubspoke.suffixes import etld_plus_one


def _hub(tmp_path, **config_overrides):
    cfg = RuntimeConfig()
    for key, value in config_overrides.items():
        setattr(cfg, key, value)
    return Hub(tmp_path / "ws", cfg, ScriptedUser(default_allow=True),
               registry=[apps.by_id("sandbox_probe")],
               provision_fixtures=apps.provision_fixtures)


def _ask(hub, query):
    session = hub.open_session()
    try:
        return hub.handle_user_query(query, session)
    finally:
        hub.close_session(session)
        hub.shutdown()


def _stderr(hub, app_id="sandbox_probe"):
    path = hub.workspace / "spokes" / app_id / "stderr.log"
    return path.read_text() if path.exists() else ""


# -- launch ------------------------------------------------------------------


def test_launch_report_shape(tmp_path):
    policy = SandboxPolicy(filesystem_view=str(tmp_path / "dir"))
    proc = launch_isolated(policy, tmp_path / "dir")
    try:
        report = proc.report
        assert report["ok"] is True
        assert report["isolation"] == "reduced"
        assert report["applied"]["rlimits"]["cpu_seconds"] == 60
        assert report["applied"]["fs_guard"] == "audit-hook"
        assert report["fd_audit"]["sockets"] == 1
        assert report["fd_audit"]["listening"] == 0
    finally:
        proc.terminate()


def test_unlaunchable_policy_is_launch_failure_not_fallback(tmp_path):
    policy = SandboxPolicy(max_virtual_memory_bytes=1 << 20,
                           filesystem_view=str(tmp_path / "dir"))
    with pytest.raises(LaunchFailure):
        launch_isolated(policy, tmp_path / "dir", launch_timeout=15)


def test_launch_failure_refuses_query(tmp_path):
    hub = _hub(tmp_path, max_virtual_memory_bytes=1 << 20)
    resp = _ask(hub, "diag read /etc/hostname")
    assert resp.error == "LaunchFailure"


# -- denial triad ---------------------------------------------------------------


def test_hub_store_read_denied_spoke_terminated(tmp_path):
    hub = _hub(tmp_path)
    hub_store = hub.workspace / "hub" / "memory" / "log" / "journal.jsonl"
    resp = _ask(hub, f"diag read {hub_store}")
    assert resp.error == "SpokeCrashed"
    assert "sandbox: open" in _stderr(hub)


def test_peer_store_read_denied(tmp_path):
    hub = _hub(tmp_path)
    peer = hub.workspace / "spokes" / "gmail_like" / "memory" / "log" / "journal.jsonl"
    resp = _ask(hub, f"diag read {peer}")
    assert resp.error == "SpokeCrashed"
    assert "sandbox: open" in _stderr(hub)


def test_off_domain_egress_blocked(tmp_path):
    hub = _hub(tmp_path)
    resp = _ask(hub, "diag egress evil.example")
    assert "block:off-domain" in resp.text


def test_denial_triad_three_of_three(tmp_path):
    hub = _hub(tmp_path)
    session = hub.open_session()
    denials = 0
    try:
        hub_store = hub.workspace / "hub" / "memory" / "log" / "journal.jsonl"
        r1 = hub.handle_user_query(f"diag read {hub_store}", session)
        denials += r1.error == "SpokeCrashed"
        peer = hub.workspace / "spokes" / "gdrive_like" / "x.json"
        r2 = hub.handle_user_query(f"diag read {peer}", session)
        denials += r2.error == "SpokeCrashed"
        r3 = hub.handle_user_query("diag egress evil.example", session)
        denials += "block" in r3.text
    finally:
        hub.close_session(session)
        hub.shutdown()
    assert denials == 3


# -- network guard -----------------------------------------------------------------


def test_on_domain_egress_needs_grant(tmp_path):
    hub = _hub(tmp_path)
    resp = _ask(hub, "diag egress api.sandboxprobe.example")
    assert "block:no-grant" in resp.text


def test_on_domain_egress_with_grant_allowed(tmp_path):
    from hubspoke.permissions import PermissionScope

    hub = _hub(tmp_path)
    hub.permissions.grant(
        PermissionScope("data_egress", ("sandbox_probe", "sandboxprobe.example")),
        "session", "s1")
    resp = _ask(hub, "diag egress api.sandboxprobe.example")
    assert "allow" in resp.text


def test_inet_sockets_denied_by_seccomp(tmp_path):
    hub = _hub(tmp_path)
    resp = _ask(hub, "diag net 93.184.216.34")
    assert "PermissionError" in resp.text or "PermissionError" in resp.error


def test_guard_egress_pure_decisions():
    policy = NetworkPolicy(root_domain="metrohail.example")
    assert guard_egress("api.metrohail.example", policy, lambda d: True) == "allow"
    assert guard_egress("api.metrohail.example", policy, lambda d: False) == "block"
    assert guard_egress("evil.example", policy, lambda d: True) == "block"
    assert guard_egress("127.0.0.1", policy, lambda d: True) == "block"
    assert [d for _, d in policy.egress_log] == [
        "allow", "block:no-grant", "block:off-domain", "block:invalid-host"]


def test_guard_fail_closed_on_invalid_host():
    policy = NetworkPolicy(root_domain="metrohail.example")
    with pytest.raises(InvalidHost):
        etld_plus_one("not..valid")
    assert guard_egress("not..valid", policy, lambda d: True) == "block"


def test_egress_log_carries_suffix_snapshot_version():
    policy = NetworkPolicy(root_domain="a.example")
    assert policy.suffix_list_version == "psl-snapshot-2026-01"


# -- resource limits ------------------------------------------------------------------


def test_cpu_limit_kills_spoke(tmp_path):
    hub = _hub(tmp_path, cpu_seconds=1)
    resp = _ask(hub, "diag spin")
    assert resp.error == "SpokeCrashed"


def test_file_size_limit_kills_spoke(tmp_path):
    hub = _hub(tmp_path, max_created_file_bytes=1 << 20)
    resp = _ask(hub, "diag bigfile 8")
    assert resp.error == "SpokeCrashed"


def test_memory_hog_terminates_spoke(tmp_path):
    hub = _hub(tmp_path)
    resp = _ask(hub, "diag hog 2048")
    assert resp.error == "SpokeCrashed"


def test_within_limits_runs_normally(tmp_path):
    hub = _hub(tmp_path)
    resp = _ask(hub, "diag hog 8")
    assert resp.error == ""
    assert "allocated" in resp.text


# -- audit trail --------------------------------------------------------------------------


def test_spoke_launch_recorded_in_audit(tmp_path):
    hub = _hub(tmp_path)
    _ask(hub, "diag hog 1")
    launches = hub.audit.of_kind("spoke_launch")
    assert launches and launches[0]["isolation"] == "reduced"
    audit_file = hub.workspace / "hub" / "audit.jsonl"
    lines = [json.loads(l) for l in audit_file.read_text().splitlines()]
    assert any(r["kind"] == "spoke_launch" for r in lines)
