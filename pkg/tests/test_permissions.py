"""Permission grants, durations, expiry, and the reference state machine."""

import pytest

from hubspoke.config import Clock
from hubspoke.errors import IrreversiblePermanentBan
from hubspoke.permissions import PermissionManager, PermissionScope, PromptRequest

from .oracles import ReferencePermissionMachine, event_sequences


@pytest.fixture()
def manager(tmp_path):
    return PermissionManager(Clock(), tmp_path / "grants.json")


COLLAB = PermissionScope("spoke_collaboration", ("gmail_like", "gdrive_like"))
SELECT = PermissionScope("app_selection", ("metro_hail",))
EGRESS = PermissionScope("data_egress", ("gmail_like", "webmail.example"))


def test_subject_arity_enforced():
    with pytest.raises(ValueError):
        PermissionScope("app_selection", ("a", "b"))
    with pytest.raises(ValueError):
        PermissionScope("data_sharing", ("a",))
    with pytest.raises(ValueError):
        PermissionScope("nonsense", ("a",))


def test_session_grant_allows_within_session(manager):
    manager.grant(COLLAB, "session", session_id="s1")
    assert manager.check(COLLAB) == "allow"
    manager.end_session("s1")
    assert manager.check(COLLAB) == "deny_prompt_needed"


def test_no_grant_prompts(manager):
    assert manager.check(COLLAB) == "deny_prompt_needed"


def test_one_time_consumed_at_use_not_check(manager):
    manager.grant(COLLAB, "one_time")
    assert manager.check(COLLAB) == "allow"
    assert manager.check(COLLAB) == "allow"  # checking never consumes
    assert manager.use(COLLAB) is True
    assert manager.check(COLLAB) == "deny_prompt_needed"
    assert manager.use(COLLAB) is False


def test_permanent_survives_restart(manager, tmp_path):
    manager.grant(SELECT, "permanent")
    fresh = PermissionManager(Clock(), tmp_path / "grants.json")
    assert fresh.check(SELECT) == "allow"


def test_permanent_banned_for_irreversible(manager):
    scope = PermissionScope("data_egress", ("gmail_like", "send_email"),
                            irreversible=True)
    with pytest.raises(IrreversiblePermanentBan):
        manager.grant(scope, "permanent")
    # and no grant ever covers an irreversible scope
    manager.grant(scope, "session", "s1")
    assert manager.check(scope) == "deny_prompt_needed"


def test_revoke(manager):
    manager.grant(SELECT, "permanent")
    assert manager.revoke(SELECT) is True
    assert manager.check(SELECT) == "deny_prompt_needed"
    assert manager.revoke(SELECT) is False


def test_revoke_session_grant_mid_session(manager):
    manager.grant(COLLAB, "session", "s1")
    assert manager.revoke(COLLAB) is True
    assert manager.check(COLLAB) == "deny_prompt_needed"


def test_revoke_by_id_and_export(manager):
    g = manager.grant(EGRESS, "session", "s1")
    listed = manager.list_grants()
    assert listed[0]["id"] == g.grant_id
    assert manager.revoke_by_id(g.grant_id) is True
    assert manager.list_grants() == []
    assert manager.revoke_by_id("g999") is False


def test_export_import_roundtrip(manager, tmp_path):
    manager.grant(SELECT, "permanent")
    manager.grant(COLLAB, "session", "s1")
    text = manager.export_text()
    other = PermissionManager(Clock(), tmp_path / "other.json")
    assert other.import_text(text) == 2
    assert other.check(SELECT) == "allow"
    assert other.check(COLLAB) == "allow"


def test_prompt_options_omit_always_for_irreversible():
    normal = PromptRequest(scope=COLLAB, human_text="x")
    assert normal.options == ["allow-once", "allow-session", "allow-always", "deny"]
    irrevocable = PromptRequest(
        scope=PermissionScope("data_egress", ("a", "b"), irreversible=True),
        human_text="x")
    assert "allow-always" not in irrevocable.options
    assert irrevocable.options == ["allow-once", "deny"]


def test_expiry_soundness_random_trials():
    """10^4 random event sequences: post-close live set == permanent set."""
    import random

    rng = random.Random(3)
    scope = PermissionScope("data_sharing", ("travel_mate", "passport_number"))
    for _ in range(10_000):
        mgr = PermissionManager(Clock())
        for _ in range(rng.randrange(8)):
            event = rng.randrange(4)
            if event == 0:
                mgr.grant(scope, rng.choice(["permanent", "session", "one_time"]),
                          session_id="s1")
            elif event == 1:
                mgr.use(scope)
            elif event == 2:
                mgr.end_session("s1")
            else:
                mgr.revoke(scope)
        permanents = {g["id"] for g in mgr.list_grants()
                      if g["duration"] == "permanent"}
        mgr.end_session("s1")
        live = {g["id"] for g in mgr.list_grants()}
        assert live == permanents


@pytest.mark.parametrize("irreversible", [False, True])
def test_matches_reference_machine_depth_four(tmp_path, irreversible):
    """Quick depth-4 sweep; the acceptance suite runs the full depth-6."""
    scope = PermissionScope("spoke_collaboration", ("a", "b"),
                            irreversible=irreversible)
    for seq in event_sequences(4):
        ref = ReferencePermissionMachine(irreversible=irreversible)
        mgr = PermissionManager(Clock())
        for event, arg in seq:
            if event == "grant":
                try:
                    mgr.grant(scope, arg, session_id="s1")
                except IrreversiblePermanentBan:
                    ref.grant(arg)
                    continue
                ref.grant(arg)
            elif event == "use":
                assert mgr.use(scope) == ref.use()
            elif event == "session_close":
                mgr.end_session("s1")
                ref.session_close()
            elif event == "revoke":
                mgr.revoke(scope)
                ref.revoke()
            assert mgr.check(scope) == ref.check(), (seq, event)
