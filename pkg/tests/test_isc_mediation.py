"""Hub-side ISC mediation: drops, permission gating, operator-only transit."""

import json

import pytest

from hubspoke import apps
from hubspoke.channel import KIND_ISC_FAIL, KIND_ISC_REPLY, Channel, channel_pair
from hubspoke.config import RuntimeConfig
from hubspoke.events import ScriptedUser
from hubspoke.hub import Hub, SpokeHandle
from hubspoke.isc import Probe, Request, decode_envelope, encode_envelope

from .oracles import build_fuzz_corpus


@pytest.fixture()
def rig(tmp_path):
    """Hub with real provider spokes and a fake in-test requester spoke."""
    cfg = RuntimeConfig()
    user = ScriptedUser(default_allow=True)
    hub = Hub(tmp_path / "ws", cfg, user,
              registry=[apps.by_id("gmail_like"), apps.by_id("gdrive_like"),
                        apps.by_id("metro_hail")],
              provision_fixtures=apps.provision_fixtures)
    session = hub.open_session()
    hub_side, child_sock = channel_pair()
    requester = SpokeHandle(app_id="gmail_like", sid="f" * 32,
                            channel=hub_side, mode="standard")
    hub.router.bind_sid(requester.sid, "gmail_like")
    test_side = Channel(child_sock)
    yield hub, session, requester, test_side, user
    hub.close_session(session)
    hub.shutdown()


def _mediate(hub, requester, session, record, test_side):
    hub._mediate_isc(requester, record, session)
    return test_side.recv(timeout=5)


def test_probe_then_request_roundtrip(rig):
    hub, session, requester, test_side, user = rig
    kind, payload = _mediate(hub, requester, session,
                             encode_envelope(Probe(requester.sid, "file_retrieval")),
                             test_side)
    assert kind == KIND_ISC_REPLY
    fr = decode_envelope(payload)
    assert fr.sid != requester.sid and "gdrive" not in fr.sid
    req = Request(sid=fr.sid, functionality="file_retrieval",
                  payload={"filename": "Q3-deck.pdf"})
    kind, payload = _mediate(hub, requester, session, encode_envelope(req), test_side)
    assert kind == KIND_ISC_REPLY
    resp = decode_envelope(payload)
    assert resp.sid == fr.sid  # counterparty id from the requester's view
    assert "revenue up 12%" in resp.payload["content"]


def test_probe_sid_integrity(rig):
    hub, session, requester, test_side, _ = rig
    kind, payload = _mediate(hub, requester, session,
                             encode_envelope(Probe("e" * 32, "file_retrieval")),
                             test_side)
    assert kind == KIND_ISC_FAIL
    assert payload == b"MALFORMED_FIELD:sid"


def test_unknown_functionality_is_no_provider(rig):
    hub, session, requester, test_side, _ = rig
    kind, payload = _mediate(hub, requester, session,
                             encode_envelope(Probe(requester.sid, "teleport")),
                             test_side)
    assert kind == KIND_ISC_FAIL and payload == b"NO_PROVIDER"


def test_request_without_probe_dropped(rig):
    hub, session, requester, test_side, _ = rig
    req = Request(sid="d" * 32, functionality="file_retrieval",
                  payload={"filename": "x"})
    kind, payload = _mediate(hub, requester, session, encode_envelope(req), test_side)
    assert kind == KIND_ISC_FAIL
    assert payload.startswith(b"MALFORMED_FIELD")


def test_oversized_string_dropped_before_any_backend(rig):
    hub, session, requester, test_side, user = rig
    _mediate(hub, requester, session,
             encode_envelope(Probe(requester.sid, "file_retrieval")), test_side)
    prompts_before = len(user.prompts)
    hub_prompt_count = len(hub.backend.prompt_log)
    req = Request(sid=hub.router.probed(requester.sid, "file_retrieval").counterparty_sid,
                  functionality="file_retrieval",
                  payload={"filename": "a" * 10_000})
    kind, payload = _mediate(hub, requester, session, encode_envelope(req), test_side)
    assert kind == KIND_ISC_FAIL
    assert payload == b"MALFORMED_FIELD:filename"
    assert len(user.prompts) == prompts_before  # dropped silently toward the user
    assert len(hub.backend.prompt_log) == hub_prompt_count
    assert "a" * 257 not in "".join(hub.backend.prompt_log)


def test_denied_collaboration_gets_reason_code_only(tmp_path):
    cfg = RuntimeConfig()
    user = ScriptedUser(default_allow=False)
    hub = Hub(tmp_path / "ws", cfg, user,
              registry=[apps.by_id("gmail_like"), apps.by_id("gdrive_like")],
              provision_fixtures=apps.provision_fixtures)
    session = hub.open_session()
    hub_side, child_sock = channel_pair()
    requester = SpokeHandle(app_id="gmail_like", sid="f" * 32,
                            channel=hub_side, mode="standard")
    hub.router.bind_sid(requester.sid, "gmail_like")
    test_side = Channel(child_sock)
    try:
        hub._mediate_isc(requester,
                         encode_envelope(Probe(requester.sid, "file_retrieval")),
                         session)
        kind, payload = test_side.recv(timeout=5)
        assert kind == KIND_ISC_FAIL and payload == b"PERMISSION_DENIED"
    finally:
        hub.close_session(session)
        hub.shutdown()


def test_fuzz_corpus_thousand_drops_no_prompts_no_leak(rig):
    hub, session, requester, test_side, user = rig
    # legitimate probes first, so mutants route past the probe table and die
    # in validation rather than at the sid gate
    sids = {}
    for functionality in ("file_retrieval", "ride_fare_estimate"):
        _mediate(hub, requester, session,
                 encode_envelope(Probe(requester.sid, functionality)), test_side)
        sids[functionality] = hub.router.probed(requester.sid,
                                                functionality).counterparty_sid
    prompt_files = list((hub.workspace / "spokes").glob("*/prompts.jsonl"))
    providers_before = {p: p.read_text() for p in prompt_files}
    prompts_before = len(user.prompts)
    hub_backend_before = len(hub.backend.prompt_log)

    corpus = build_fuzz_corpus(1000, sids=sids)
    drops = 0
    for record in corpus:
        kind, payload = _mediate(hub, requester, session, record, test_side)
        if kind == KIND_ISC_FAIL:
            drops += 1
            assert len(payload) < 64  # reason code only, no payload echo
    assert drops == 1000
    assert len(user.prompts) == prompts_before
    assert len(hub.backend.prompt_log) == hub_backend_before
    for p, before in providers_before.items():
        assert p.read_text() == before
    drop_records = hub.audit.of_kind("isc_drop")
    assert len(drop_records) >= 1000


def test_envelopes_never_reach_backend_prompts(rig):
    hub, session, requester, test_side, _ = rig
    probe_record = encode_envelope(Probe(requester.sid, "file_retrieval"))
    _mediate(hub, requester, session, probe_record, test_side)
    req = Request(sid=hub.router.probed(requester.sid, "file_retrieval").counterparty_sid,
                  functionality="file_retrieval",
                  payload={"filename": "Q3-deck.pdf"})
    _mediate(hub, requester, session, encode_envelope(req), test_side)
    # operator-only transit: no prompt anywhere contains a raw wire record
    all_prompts = list(hub.backend.prompt_log)
    provider_prompts = hub.workspace / "spokes" / "gdrive_like" / "prompts.jsonl"
    if provider_prompts.exists():
        all_prompts += [json.loads(l)["prompt"]
                        for l in provider_prompts.read_text().splitlines()]
    for prompt in all_prompts:
        assert requester.sid not in prompt
        assert "\\u0000" not in prompt


def test_provider_crash_fails_collaboration_not_query(rig):
    hub, session, requester, test_side, _ = rig
    _mediate(hub, requester, session,
             encode_envelope(Probe(requester.sid, "file_retrieval")), test_side)
    probed = hub.router.probed(requester.sid, "file_retrieval")
    provider = next(h for h in session.active_spokes.values()
                    if h.sid == probed.counterparty_sid)
    provider.process.proc.kill()
    provider.process.proc.wait()
    req = Request(sid=probed.counterparty_sid, functionality="file_retrieval",
                  payload={"filename": "Q3-deck.pdf"})
    kind, payload = _mediate(hub, requester, session, encode_envelope(req), test_side)
    assert kind == KIND_ISC_FAIL
    assert payload == b"PROVIDER_FAILED"
    # the dead provider was purged; the requester's channel still works
    assert all(h.sid != probed.counterparty_sid
               for h in session.active_spokes.values())
