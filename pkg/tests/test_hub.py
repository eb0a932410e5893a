"""Hub operator: planning, selection, consent, mediation, full flows."""

import json

import pytest

from hubspoke import apps
from hubspoke.config import RuntimeConfig
from hubspoke.events import ScriptedUser
from hubspoke.hub import Hub
from hubspoke.permissions import PermissionScope

from .oracles import random_planner_outputs


def make_hub(tmp_path, app_ids, user=None, seed=0, store_ids=()):
    cfg = RuntimeConfig()
    cfg.backend.seed = seed
    return Hub(tmp_path / "ws", cfg, user or ScriptedUser(default_allow=True),
               registry=[apps.by_id(a) for a in app_ids],
               store_apps=[apps.by_id(a) for a in store_ids],
               provision_fixtures=apps.provision_fixtures)


@pytest.fixture()
def closing():
    hubs = []
    sessions = []
    yield lambda hub, session: (hubs.append(hub), sessions.append(session))
    for hub, session in zip(hubs, sessions):
        hub.close_session(session)
        hub.shutdown()


# -- planning ----------------------------------------------------------------


def test_plan_multiple_primary_for_comparison(tmp_path):
    hub = make_hub(tmp_path, ["metro_hail", "quick_ride"])
    plan = hub.plan_query("book the cheapest ride", None, list(hub.registry.values()))
    assert plan.primary_apps == ["metro_hail", "quick_ride"]
    assert plan.wants_synthesis
    hub.shutdown()


def test_plan_empty_registry_needs_no_app(tmp_path):
    hub = make_hub(tmp_path, [])
    plan = hub.plan_query("book the cheapest ride", None, [])
    assert plan.needs_app is False
    assert plan.primary_apps == [] and plan.secondary_apps == []
    hub.shutdown()


def test_plan_keyword_table_targets_mail(tmp_path):
    hub = make_hub(tmp_path, ["gmail_like", "gdrive_like"])
    plan = hub.plan_query("archive my email", None, list(hub.registry.values()))
    assert plan.primary_apps == ["gmail_like"]
    hub.shutdown()


def test_plan_secondary_includes_drive_for_attachment(tmp_path):
    hub = make_hub(tmp_path, ["gmail_like", "gdrive_like"])
    plan = hub.plan_query("reply to dana with the Q3 deck attached", None,
                          list(hub.registry.values()))
    assert plan.primary_apps == ["gmail_like"]
    assert plan.secondary_apps == ["gdrive_like"]
    hub.shutdown()


def test_fuzzed_planner_outputs_never_reference_unregistered(tmp_path):
    registered = {"gmail_like", "gdrive_like", "metro_hail"}
    for output in random_planner_outputs(1000, sorted(registered)):
        plan = Hub.parse_and_validate_plan(output, registered)
        if plan is None:
            continue
        assert set(plan.primary_apps) <= registered
        assert set(plan.secondary_apps) <= registered
        assert not (set(plan.primary_apps) & set(plan.secondary_apps))
        assert len(set(plan.primary_apps)) == len(plan.primary_apps)
        if not plan.needs_app:
            assert plan.primary_apps == [] and plan.secondary_apps == []


# -- app selection ------------------------------------------------------------


def test_singleton_candidate_no_prompt(tmp_path):
    user = ScriptedUser(default_allow=True)
    hub = make_hub(tmp_path, ["metro_hail"], user=user)
    session = hub.open_session()
    assert hub.resolve_app_selection(["metro_hail"], session) == "metro_hail"
    assert user.prompts == []
    hub.shutdown()


def test_prior_grant_selects_without_prompt(tmp_path):
    user = ScriptedUser(default_allow=True)
    hub = make_hub(tmp_path, ["metro_hail", "quick_ride"], user=user)
    hub.permissions.grant(PermissionScope("app_selection", ("metro_hail",)),
                          "permanent")
    session = hub.open_session()
    assert hub.resolve_app_selection(["quick_ride", "metro_hail"], session) == "metro_hail"
    assert user.prompts == []
    hub.shutdown()


def test_one_time_choice_prompts_again(tmp_path):
    user = ScriptedUser(table={("app_choice", "a|b"): ("b", "one_time")})
    hub = make_hub(tmp_path, [], user=user)
    session = hub.open_session()
    assert hub.resolve_app_selection(["a", "b"], session) == "b"
    assert hub.resolve_app_selection(["a", "b"], session) == "b"
    assert len([p for p in user.prompts if p.kind == "app_choice_request"]) == 2
    hub.shutdown()


def test_session_choice_prompts_once(tmp_path):
    user = ScriptedUser(table={("app_choice", "a|b"): ("b", "session")})
    hub = make_hub(tmp_path, [], user=user)
    session = hub.open_session()
    hub.resolve_app_selection(["a", "b"], session)
    hub.resolve_app_selection(["a", "b"], session)
    assert len([p for p in user.prompts if p.kind == "app_choice_request"]) == 1
    hub.shutdown()


# -- bootstrap data ------------------------------------------------------------


def test_bootstrap_same_attribution_auto_included(tmp_path):
    user = ScriptedUser(default_allow=True)
    hub = make_hub(tmp_path, ["travel_mate"], user=user)
    hub.memory.upsert_entity("passport_number", "P1", "travel_mate")
    session = hub.open_session()
    plan = hub.plan_query("book me a flight to Paris", None,
                          list(hub.registry.values()))
    data = hub.gather_bootstrap_data(apps.by_id("travel_mate"), plan, session)
    assert ("passport_number", "P1") in data
    assert user.prompts == []
    hub.shutdown()


def test_bootstrap_cross_attribution_prompts_and_respects_decline(tmp_path):
    user = ScriptedUser(table={("data_consent", "symptoms"): False},
                        default_allow=True)
    hub = make_hub(tmp_path, ["travel_mate"], user=user)
    hub.memory.upsert_entity("symptoms", "headache and fever", "health_companion")
    hub.memory.upsert_entity("home_city", "Springfield", "health_companion")
    session = hub.open_session()
    plan = hub.plan_query("book me a flight to Paris", None,
                          list(hub.registry.values()))
    data = hub.gather_bootstrap_data(apps.by_id("travel_mate"), plan, session)
    assert ("home_city", "Springfield") in data  # approved by default
    assert all(k != "symptoms" for k, _ in data)  # declined stays put
    prompts = [p for p in user.prompts if p.kind == "data_consent_request"]
    assert {p.payload["entity"] for p in prompts} == {"symptoms", "home_city"}
    assert prompts[0].payload["value"]  # value shown verbatim
    hub.shutdown()


def test_bootstrap_empty_memory_no_prompt(tmp_path):
    user = ScriptedUser(default_allow=True)
    hub = make_hub(tmp_path, ["travel_mate"], user=user)
    session = hub.open_session()
    plan = hub.plan_query("book me a flight to Paris", None,
                          list(hub.registry.values()))
    assert hub.gather_bootstrap_data(apps.by_id("travel_mate"), plan, session) == []
    assert user.prompts == []
    hub.shutdown()


# -- collaboration assessment -----------------------------------------------------


def test_assessment_expected_when_provider_planned(tmp_path):
    hub = make_hub(tmp_path, ["gmail_like", "gdrive_like"])
    plan = hub.plan_query("reply to dana with the Q3 deck attached", None,
                          list(hub.registry.values()))
    hub._active_plan = plan
    from hubspoke.hub import SpokeHandle

    requester = SpokeHandle(app_id="gmail_like", sid="f" * 32, channel=None,
                            mode="standard")
    verdict = hub.assess_collaboration_request(requester, "file_retrieval", plan)
    assert verdict.verdict == "expected"
    hub.shutdown()


def test_assessment_unexpected_when_not_planned(tmp_path):
    hub = make_hub(tmp_path, ["gmail_like", "gdrive_like", "metro_hail"])
    plan = hub.plan_query("archive my email", None, list(hub.registry.values()))
    from hubspoke.hub import SpokeHandle

    requester = SpokeHandle(app_id="gmail_like", sid="f" * 32, channel=None,
                            mode="standard")
    verdict = hub.assess_collaboration_request(requester, "ride_fare_estimate", plan)
    assert verdict.verdict == "unexpected"
    hub.shutdown()


def test_assessment_self_collaboration_unexpected(tmp_path):
    hub = make_hub(tmp_path, ["gdrive_like"])
    from hubspoke.hub import SpokeHandle

    requester = SpokeHandle(app_id="gdrive_like", sid="f" * 32, channel=None,
                            mode="standard")
    verdict = hub.assess_collaboration_request(requester, "file_retrieval", None)
    assert verdict.verdict == "unexpected"
    hub.shutdown()


# -- end-to-end flows ----------------------------------------------------------------


def test_no_app_query_routed_to_vanilla(tmp_path, closing):
    hub = make_hub(tmp_path, ["gmail_like", "metro_hail"])
    session = hub.open_session()
    closing(hub, session)
    resp = hub.handle_user_query("what is the capital of France?", session)
    assert "Paris" in resp.text
    assert resp.apps == []
    assert "(vanilla)" in session.active_spokes


def test_email_attachment_flow_with_isc(tmp_path, closing):
    user = ScriptedUser(default_allow=True)
    hub = make_hub(tmp_path, ["gmail_like", "gdrive_like"], user=user)
    session = hub.open_session()
    closing(hub, session)
    resp = hub.handle_user_query("reply to dana with the Q3 deck attached", session)
    assert "Reply sent" in resp.text
    assert resp.observed_steps == ["read_inbox", "file_retrieval", "send_email"]
    # the deck content crossed through the validated channel into the mail
    box = json.loads((hub.workspace / "spokes" / "gmail_like" /
                      "gmail_like__mailbox.json").read_text())
    assert "revenue up 12%" in box["sent"][0]["body"]
    # the collaboration prompt carried the hub's assessment
    collab_prompts = [p for p in user.prompts
                      if p.kind == "permission_request"
                      and "assessment" in p.payload
                      and p.payload["assessment"]]
    assert any("expected" in p.payload["assessment"] for p in collab_prompts)
    # per-instance consent for the irreversible send
    assert any(c["tool"] == "send_email" and c["approved"]
               for c in hub.consent_log)


def test_spoke_reuse_within_session(tmp_path, closing):
    hub = make_hub(tmp_path, ["typewriter"])
    session = hub.open_session()
    closing(hub, session)
    hub.handle_user_query("type 'ab'", session)
    sid_first = session.active_spokes["typewriter"].sid
    hub.handle_user_query("type 'cd'", session)
    assert session.active_spokes["typewriter"].sid == sid_first
    launches = hub.audit.of_kind("spoke_launch")
    assert len([l for l in launches if l["app"] == "typewriter"]) == 1


def test_distinct_sids_per_app(tmp_path, closing):
    hub = make_hub(tmp_path, ["gmail_like", "gdrive_like"])
    session = hub.open_session()
    closing(hub, session)
    h1 = hub.spawn_or_attach_spoke(apps.by_id("gmail_like"), session)
    h2 = hub.spawn_or_attach_spoke(apps.by_id("gdrive_like"), session)
    assert h1.sid != h2.sid
    assert len(h1.sid) == 64 // 2 and set(h1.sid) <= set("0123456789abcdef")


def test_private_spoke_empty_memory_view(tmp_path, closing):
    hub = make_hub(tmp_path, ["typewriter"])
    session = hub.open_session()
    closing(hub, session)
    hub.handle_user_query("type 'ab'", session)
    resp = hub.handle_user_query("type 'cd'", session, private=True)
    assert '"cd"' in resp.text
    private_dirs = list((hub.workspace / "spokes").glob("typewriter-private-*"))
    assert len(private_dirs) == 1
    prompts = (private_dirs[0] / "prompts.jsonl").read_text()
    assert "Context:" not in prompts


def test_private_interactions_flagged_and_excluded(tmp_path, closing):
    hub = make_hub(tmp_path, ["typewriter"])
    session = hub.open_session()
    closing(hub, session)
    hub.handle_user_query("type 'xx'", session, private=True)
    records = hub.memory.records(include_private=True)
    assert records and all(r.private for r in records)
    wm = hub.memory.build_working_memory("q", 10, 4096)
    assert wm.recent == []


def test_synthesis_compares_fares_out_of_spokes(tmp_path, closing):
    hub = make_hub(tmp_path, ["metro_hail", "quick_ride"])
    session = hub.open_session()
    closing(hub, session)
    resp = hub.handle_user_query("book the cheapest ride from downtown to airport",
                                 session)
    assert "Metro Hail: $14" in resp.text
    assert "Quick Ride: $18" in resp.text
    assert "Metro Hail offers the lower fare" in resp.text
    assert set(resp.apps) == {"metro_hail", "quick_ride"}


def test_mediation_topology_hub_only(tmp_path, closing):
    hub = make_hub(tmp_path, ["gmail_like", "gdrive_like"])
    session = hub.open_session()
    closing(hub, session)
    hub.handle_user_query("reply to dana with the Q3 deck attached", session)
    edges = hub.topology()
    assert all(edge[0] == "hub" for edge in edges)
    # every live channel endpoint belongs to the hub process
    for handle in session.active_spokes.values():
        assert handle.channel is not None


def test_user_declined_becomes_refusal_not_exception(tmp_path, closing):
    user = ScriptedUser(table={("app_choice", "metro_hail|quick_ride"): (None, "one_time")},
                        default_allow=True)
    hub = make_hub(tmp_path, ["metro_hail", "quick_ride"], user=user)
    session = hub.open_session()
    closing(hub, session)
    resp = hub.handle_user_query("book a ride from downtown to airport", session)
    assert resp.error == "user_declined"
    assert "declined" in resp.text


def test_transcript_records_query_permissions_and_response(tmp_path, closing):
    hub = make_hub(tmp_path, ["gmail_like", "gdrive_like"])
    session = hub.open_session()
    closing(hub, session)
    hub.handle_user_query("reply to dana with the Q3 deck attached", session)
    kinds = [t["kind"] for t in session.transcript]
    assert kinds[0] == "user_query"
    assert "hub_plan" in kinds
    assert "permission_prompt" in kinds
    assert "irreversible_prompt" in kinds
    assert kinds[-1] == "assistant"


def test_audit_log_has_full_state_walk(tmp_path, closing):
    hub = make_hub(tmp_path, ["typewriter"])
    session = hub.open_session()
    closing(hub, session)
    hub.handle_user_query("type 'a'", session)
    walk = [(r["state_from"], r["state_to"]) for r in hub.audit.of_kind("transition")]
    assert ("Idle", "Planning") in walk
    assert ("Planning", "AppSelection") in walk
    assert ("AppSelection", "DataConsent") in walk
    assert ("DataConsent", "SpokeRunning") in walk
    assert walk[-1] == ("Responding", "Idle")


def test_session_close_expires_session_grants_and_spokes(tmp_path, closing):
    hub = make_hub(tmp_path, ["typewriter"])
    session = hub.open_session()
    hub.handle_user_query("type 'a'", session)
    scope = PermissionScope("spoke_collaboration", ("a", "b"))
    hub.permissions.grant(scope, "session", session.session_id)
    handle = session.active_spokes["typewriter"]
    hub.close_session(session)
    hub.shutdown()
    assert hub.permissions.check(scope) == "deny_prompt_needed"
    assert not handle.process.alive()
    assert (hub.workspace / "sessions" / f"{session.session_id}.jsonl").exists()
    with pytest.raises(ValueError):
        hub.handle_user_query("type 'b'", session)


def test_store_install_with_consent_through_probe(tmp_path, closing):
    user = ScriptedUser(default_allow=True)
    hub = make_hub(tmp_path, ["gmail_like"], user=user, store_ids=["gdrive_like"])
    session = hub.open_session()
    closing(hub, session)
    assert "gdrive_like" not in hub.registry
    resp = hub.handle_user_query("reply to dana with the Q3 deck attached", session)
    assert "Reply sent" in resp.text
    assert "gdrive_like" in hub.registry  # installed on demand with consent
    installs = [p for p in user.prompts
                if p.payload.get("entity", "").startswith("install:")]
    assert len(installs) == 1


def test_functionality_broadcast_identical_regardless_of_install(tmp_path):
    hub_a = make_hub(tmp_path / "a", ["gmail_like", "gdrive_like"])
    hub_b = make_hub(tmp_path / "b", ["gmail_like"], store_ids=["gdrive_like"])
    assert hub_a.catalog.list_functionalities() == hub_b.catalog.list_functionalities()
    hub_a.shutdown()
    hub_b.shutdown()
