"""Manifest validation, round-trip, and the built-in suite contents."""

import pytest

from hubspoke import apps
from hubspoke.errors import ManifestInvalid
from hubspoke.manifest import HANDLERS, load_manifest, serialize_manifest


def _doc(**overrides):
    doc = {
        "app_id": "metro_hail",
        "display_name": "Metro Hail",
        "description": "Books rides.",
        "root_domain": "metrohail.example",
        "tools": [
            {"name": "fare_estimate", "params": {"origin": "string"},
             "binding": "builtin:metro_hail.fare_estimate",
             "result_type": "integer"},
        ],
        "functionalities": [],
        "irreversible_actions": [],
    }
    doc.update(overrides)
    return doc


def test_valid_manifest_loads():
    m = load_manifest(_doc())
    assert m.app_id == "metro_hail"
    assert m.tool("fare_estimate").result_type == "integer"


def test_irreversible_must_be_a_tool():
    with pytest.raises(ManifestInvalid) as exc:
        load_manifest(_doc(irreversible_actions=["send_email"]))
    assert exc.value.field == "irreversible_actions"


def test_empty_description_rejected():
    with pytest.raises(ManifestInvalid) as exc:
        load_manifest(_doc(description="   "))
    assert exc.value.field == "description"


def test_root_domain_must_be_etld_plus_one():
    with pytest.raises(ManifestInvalid):
        load_manifest(_doc(root_domain="api.metrohail.example"))
    with pytest.raises(ManifestInvalid):
        load_manifest(_doc(root_domain="127.0.0.1"))


def test_bad_functionality_type_rejected():
    bad = _doc(functionalities=[{"name": "f",
                                 "request_fields": [["x", "floaty"]],
                                 "response_fields": []}])
    with pytest.raises(ManifestInvalid):
        load_manifest(bad)


def test_roundtrip_semantically_identical():
    for manifest in apps.builtin_suite():
        doc = serialize_manifest(manifest)
        again = load_manifest(doc)
        assert serialize_manifest(again) == doc


# -- built-in suite ---------------------------------------------------------------


def test_suite_size_and_members():
    suite = apps.builtin_suite()
    ids = [m.app_id for m in suite]
    assert len(suite) >= 35
    assert len(set(ids)) == len(ids)
    for expected in ("metro_hail", "quick_ride", "gmail_like", "gdrive_like",
                     "travel_mate", "health_companion", "creative_muse",
                     "symptom_solver", "typewriter", "relational_data",
                     "email_extractor"):
        assert expected in ids
    assert sum(1 for i in ids if i.startswith("letter_")) == 26


def test_quick_ride_description_carries_the_injection():
    from hubspoke.apps import tables

    quick = apps.by_id("quick_ride")
    assert tables.FARE_INJECTION in quick.description
    metro = apps.by_id("metro_hail")
    assert tables.FARE_INJECTION not in metro.description


def test_fare_tool_pure_and_unmodified():
    handler = HANDLERS.resolve("builtin:quick_ride.fare_estimate")
    assert handler({}, None) == 18
    assert handler({"origin": "x"}, None) == 18
    metro = HANDLERS.resolve("builtin:metro_hail.fare_estimate")
    assert metro({}, None) == 14


def test_malicious_mailbox_fixture(tmp_path):
    from hubspoke.apps import tables

    apps.provision_fixtures("gmail_like", tmp_path)
    inbox = HANDLERS.resolve("builtin:gmail_like.read_inbox")({}, tmp_path)
    assert inbox[0]["id"] == "m2"
    body = HANDLERS.resolve("builtin:gmail_like.read_email")(
        {"email_id": "m2"}, tmp_path)["body"]
    assert tables.MAIL_INJECTION in body
    assert "delete" in body


def test_threat_model_irreversibility_mapping():
    gmail = apps.by_id("gmail_like")
    gdrive = apps.by_id("gdrive_like")
    assert "send_email" in gmail.irreversible_actions
    assert "delete_email" in gmail.irreversible_actions
    assert "file_retrieval" not in gdrive.irreversible_actions


def test_vague_personal_data_descriptions():
    for app_id in ("travel_mate", "health_companion"):
        desc = apps.by_id(app_id).description.lower()
        assert "personal data" in desc


def test_conflicting_directives():
    from hubspoke.apps.advisors import CREATIVE_DIRECTIVE, OBJECTIVE_DIRECTIVE

    assert CREATIVE_DIRECTIVE in apps.by_id("creative_muse").description
    assert OBJECTIVE_DIRECTIVE in apps.by_id("symptom_solver").description


def test_tool_purity_on_fixture_state(tmp_path):
    apps.provision_fixtures("relational_data", tmp_path)
    find = HANDLERS.resolve("builtin:relational.find_users_by_name")
    first = find({"name": "alice"}, tmp_path)
    second = find({"name": "alice"}, tmp_path)
    assert first == second == [{"id": 1, "name": "alice"}]
    email = HANDLERS.resolve("builtin:relational.get_user_email")
    assert email({"user_id": 1}, tmp_path) == "alice@gmail.com"


def test_typewriter_tools(tmp_path):
    typer = HANDLERS.resolve("builtin:typewriter.type_letter")
    assert typer({"letter": "q"}, None) == "q"
    with pytest.raises(ValueError):
        typer({"letter": "qq"}, None)
    letter_z = HANDLERS.resolve("builtin:letter_z.type")
    assert letter_z({}, None) == "z"
