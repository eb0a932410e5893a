"""Spoke runtime: planning, step execution, consent paths, purity."""

import json

import pytest

import hubspoke.apps as apps
from hubspoke.backend import (
    BackendSpec,
    ChatTurn,
    Rule,
    RuleTable,
    make_backend,
    register_table,
)
from hubspoke.errors import PlanningFailure
from hubspoke.memory import MemoryStore
from hubspoke.spoke import HubPort, SpokeRuntime


class StubHub(HubPort):
    def __init__(self, values=None, approve=True, isc=None):
        self.values = dict(values or {})
        self.approve = approve
        self.isc = dict(isc or {})
        self.asked: list[str] = []
        self.confirmed: list[tuple[str, str]] = []

    def ask_user_data(self, entity):
        self.asked.append(entity)
        return self.values.get(entity)

    def confirm_irreversible(self, tool, preview):
        self.confirmed.append((tool, preview))
        return self.approve

    def isc_probe(self, functionality):
        if functionality in self.isc:
            return {"sid": "c" * 32, "request_format": "[]", "response_format": "[]"}
        return None

    def isc_request(self, functionality, payload):
        if functionality in self.isc:
            return self.isc[functionality]
        return "NO_PROVIDER"


def make_runtime(app_id, tmp_path, hub=None, mode="standard",
                 functionalities=(), table="builtin"):
    manifest = apps.by_id(app_id) if app_id else None
    backend = make_backend(BackendSpec(kind="scripted", table_id=table))
    memory = MemoryStore(tmp_path / "memory", principal=app_id or "vanilla")
    if app_id:
        apps.provision_fixtures(app_id, tmp_path)
    return SpokeRuntime(manifest=manifest, mode=mode, backend=backend,
                        memory=memory, hub=hub or StubHub(),
                        available_functionalities=list(functionalities),
                        private_dir=tmp_path)


def test_typewriter_types_letter_by_letter(tmp_path):
    rt = make_runtime("typewriter", tmp_path)
    outcome = rt.handle_invocation("type 'abc'", [], None)
    assert outcome.tool_trace == ["type_letter", "type_letter", "type_letter"]
    assert "abc" in outcome.response


def test_empty_query_is_error_without_tools(tmp_path):
    rt = make_runtime("typewriter", tmp_path)
    outcome = rt.handle_invocation("   ", [], None)
    assert outcome.error == "empty query"
    assert outcome.tool_trace == []


def test_relational_listing_one_case(tmp_path):
    rt = make_runtime("relational_data", tmp_path)
    outcome = rt.handle_invocation("what is alice's email address?", [], None)
    assert outcome.tool_trace == ["find_users_by_name", "get_user_email"]
    assert "alice@gmail.com" in outcome.response


def test_unknown_functionality_stripped_from_plan(tmp_path):
    register_table("teleport_plans", RuleTable([
        Rule("plan", lambda v: '"functionalities_needed"' in v.text,
             lambda v: ChatTurn("assistant", json.dumps({
                 "steps": [
                     {"kind": "isc_request", "functionality": "teleport", "args": {}},
                     {"kind": "final_answer"},
                 ],
                 "data_needed": [],
                 "functionalities_needed": ["teleport", "file_retrieval"],
             }))),
        Rule("final", lambda v: True, lambda v: ChatTurn("assistant", "done"),
             priority=-1),
    ]))
    rt = make_runtime("gmail_like", tmp_path, table="teleport_plans",
                      functionalities=["file_retrieval"])
    plan = rt.generate_plan("anything", [], None, ["file_retrieval"])
    assert plan.functionalities_needed == ["file_retrieval"]
    assert [s.kind for s in plan.steps] == ["final_answer"]


def test_planning_failure_after_one_reprompt(tmp_path):
    register_table("garbage", RuleTable([
        Rule("noise", lambda v: True, lambda v: ChatTurn("assistant", "not json")),
    ]))
    rt = make_runtime("typewriter", tmp_path, table="garbage")
    with pytest.raises(PlanningFailure):
        rt.generate_plan("type 'a'", [], None, [])
    assert rt.backend.call_count("planning") == 2  # one reprompt, then fail


def test_irreversible_prompt_shows_full_outbound_content(tmp_path):
    hub = StubHub(approve=True, isc={"file_retrieval": {"content": "DECK"}})
    rt = make_runtime("gmail_like", tmp_path, hub=hub,
                      functionalities=["file_retrieval"])
    outcome = rt.handle_invocation("reply to dana with the Q3 deck attached", [], None)
    assert [c[0] for c in hub.confirmed] == ["send_email"]
    assert "DECK" in hub.confirmed[0][1]  # preview carries the body verbatim
    assert outcome.tool_trace == ["read_inbox", "send_email"]
    assert outcome.step_trace == ["read_inbox", "isc:file_retrieval", "send_email"]


def test_irreversible_decline_is_normal_false(tmp_path):
    hub = StubHub(approve=False, isc={"file_retrieval": {"content": "DECK"}})
    rt = make_runtime("gmail_like", tmp_path, hub=hub,
                      functionalities=["file_retrieval"])
    outcome = rt.handle_invocation("reply to dana with the Q3 deck attached", [], None)
    assert "send_email" not in outcome.tool_trace
    assert "declined" in outcome.response.lower()
    box = json.loads((tmp_path / "gmail_like__mailbox.json").read_text())
    assert box["sent"] == []


def test_non_irreversible_tool_never_prompts(tmp_path):
    hub = StubHub()
    rt = make_runtime("typewriter", tmp_path, hub=hub)
    rt.handle_invocation("type 'ab'", [], None)
    assert hub.confirmed == []


def test_confirm_irreversible_rejects_unlisted_tool(tmp_path):
    rt = make_runtime("typewriter", tmp_path)
    with pytest.raises(ValueError):
        rt.confirm_irreversible("type_letter", "preview")


def test_user_data_request_decline_aborts_with_explanation(tmp_path):
    hub = StubHub(values={})
    rt = make_runtime("travel_mate", tmp_path, hub=hub)
    outcome = rt.handle_invocation("book me a flight to Paris", [], None)
    assert hub.asked == ["passport_number"]
    assert "declined" in outcome.response.lower()
    assert outcome.tool_trace == ["search_flights"]


def test_user_data_request_value_recorded(tmp_path):
    hub = StubHub(values={"passport_number": "P99"}, approve=True)
    rt = make_runtime("travel_mate", tmp_path, hub=hub)
    outcome = rt.handle_invocation("book me a flight to Paris", [], None)
    assert outcome.tool_trace == ["search_flights", "book_flight"]
    pair = rt.memory.lookup_entity("passport_number")
    assert pair.value == "P99" and pair.attribution == "travel_mate"


def test_bootstrap_data_used_without_asking(tmp_path):
    hub = StubHub(values={}, approve=True)
    rt = make_runtime("travel_mate", tmp_path, hub=hub)
    outcome = rt.handle_invocation("book me a flight to Paris",
                                   [("passport_number", "P77")], None)
    assert hub.asked == []
    assert outcome.tool_trace == ["search_flights", "book_flight"]


def test_tool_failure_retried_then_surfaced(tmp_path):
    register_table("bad_tool_plan", RuleTable([
        Rule("plan", lambda v: '"functionalities_needed"' in v.text,
             lambda v: ChatTurn("assistant", json.dumps({
                 "steps": [
                     {"kind": "tool_call", "tool": "read_email",
                      "args": {"email_id": "absent"}},
                     {"kind": "final_answer"},
                 ], "data_needed": [], "functionalities_needed": [],
             }))),
        Rule("final", lambda v: v.last.content.startswith("FINAL ANSWER:"),
             lambda v: ChatTurn("assistant", "finished: " + v.last.content.split("results:")[1][:80]),
             priority=-1),
    ]))
    rt = make_runtime("gmail_like", tmp_path, table="bad_tool_plan")
    outcome = rt.handle_invocation("whatever", [], None)
    assert "failed" in outcome.response
    log = (tmp_path / "tool_log.jsonl").read_text().splitlines()
    # one retry per step, once per plan, one re-plan allowed: 4 attempts
    assert len(log) == 4


def test_trace_matches_independent_tool_log(tmp_path):
    rt = make_runtime("typewriter", tmp_path)
    outcome = rt.handle_invocation("type 'queue'", [], None)
    logged = [json.loads(l)["tool"] for l in
              (tmp_path / "tool_log.jsonl").read_text().splitlines()]
    assert logged == outcome.tool_trace


def test_vanilla_prompt_contains_no_manifest_text(tmp_path):
    rt = make_runtime(None, tmp_path)
    rt.handle_invocation("what is the capital of France?", [], None)
    descriptions = [m.description for m in apps.builtin_suite()]
    for prompt in rt.backend.prompt_log:
        for desc in descriptions:
            assert desc not in prompt
    assert "Paris" in rt.handle_invocation("what is the capital of France?", [],
                                           None).response


def test_private_mode_differs_only_by_memory_content(tmp_path):
    standard = make_runtime("typewriter", tmp_path / "a")
    standard.memory.append("user", "Earlier chatter to remember.")
    wm = standard.memory.build_working_memory("q", 10, 4096)
    standard.handle_invocation("type 'ab'", [], wm)

    private = make_runtime("typewriter", tmp_path / "b", mode="private")
    private.handle_invocation("type 'ab'", [], None)

    std_prompt = standard.backend.prompt_log[0]
    prv_prompt = private.backend.prompt_log[0]
    assert "Earlier chatter" in std_prompt
    assert prv_prompt == std_prompt.replace(
        "[system] Context:\n(user) Earlier chatter to remember.\n", "")
