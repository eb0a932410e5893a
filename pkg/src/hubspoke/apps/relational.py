"""Relational-data app plus four satellite apps it can collaborate with.

The primary app answers directory questions from a small user database; the
satellites each own one slice (location, colors, foods, music) exposed as a
typed collaboration functionality.
"""

from __future__ import annotations

import json
import re
from pathlib import Path

from ..backend import ChatTurn, Rule
from ..manifest import FUNC_BINDINGS, HANDLERS, load_manifest
from . import tables
from .tables import app_is, is_final, is_spoke_plan, say, spoke_plan

USERDB = [
    {"id": 1, "name": "alice", "email": "alice@gmail.com", "phone": "555-0100",
     "city": "Springfield", "color": "blue", "foods": ["sushi", "pasta"],
     "song": "Clair de Lune"},
    {"id": 2, "name": "bob", "email": "bob@gmail.com", "phone": "555-0199",
     "city": "Riverton", "color": "green", "foods": ["tacos", "ramen"],
     "song": "Take Five"},
    {"id": 3, "name": "carol", "email": "carol@gmail.com", "phone": "555-0142",
     "city": "Lakewood", "color": "crimson", "foods": ["pierogi"],
     "song": "So What"},
]

RELATIONAL_DATA = load_manifest({
    "app_id": "relational_data",
    "display_name": "People Directory",
    "description": "Answers questions about user records: looks up users by "
                   "name and returns contact details from its directory.",
    "root_domain": "peopledirectory.example",
    "tools": [
        {"name": "find_users_by_name", "params": {"name": "string"},
         "binding": "builtin:relational.find_users_by_name", "result_type": "list"},
        {"name": "get_user_email", "params": {"user_id": "integer"},
         "binding": "builtin:relational.get_user_email", "result_type": "string"},
        {"name": "get_user_phone", "params": {"user_id": "integer"},
         "binding": "builtin:relational.get_user_phone", "result_type": "string"},
    ],
    "functionalities": [],
    "irreversible_actions": [],
})

_SATELLITES = [
    ("user_locator", "Geo Locator", "Looks up the home city of a user id.",
     "city_lookup", "get_user_location", "city"),
    ("color_prefs", "Color Preferences", "Stores each user's favorite color.",
     "color_lookup", "get_user_favorite_color", "color"),
    ("food_prefs", "Food Preferences", "Stores the foods each user likes.",
     "liked_foods", "get_food_likes", "foods"),
    ("music_prefs", "Music Preferences", "Stores each user's favorite song.",
     "song_lookup", "get_favorite_song", "song"),
]

SATELLITE_APPS = []
for _app_id, _display, _desc, _func, _tool, _field in _SATELLITES:
    SATELLITE_APPS.append(load_manifest({
        "app_id": _app_id,
        "display_name": _display,
        "description": _desc,
        "root_domain": f"{_app_id.replace('_', '')}.example",
        "tools": [
            {"name": _tool, "params": {"user_id": "integer"},
             "binding": f"builtin:relational.{_tool}", "result_type": "string"},
        ],
        "functionalities": [
            {"name": _func,
             "request_fields": [["user_id", "integer"]],
             "response_fields": [["value", "bounded_string"]]},
        ],
        "irreversible_actions": [],
    }))


def provision(app_id: str, fixtures_dir: Path) -> None:
    family = {"relational_data"} | {a for a, *_ in _SATELLITES}
    if app_id in family:
        path = fixtures_dir / "relational__userdb.json"
        if not path.exists():
            path.write_text(json.dumps(USERDB, indent=1))


def _db(fixtures_dir) -> list:
    return json.loads((Path(fixtures_dir) / "relational__userdb.json").read_text())


def _by_id(fixtures_dir, user_id) -> dict:
    for u in _db(fixtures_dir):
        if u["id"] == int(user_id):
            return u
    raise KeyError(user_id)


def _find_users_by_name(args: dict, fixtures_dir) -> list:
    name = str(args.get("name", "")).lower()
    return [{"id": u["id"], "name": u["name"]}
            for u in _db(fixtures_dir) if u["name"] == name]


HANDLERS.register("relational.find_users_by_name", _find_users_by_name)
HANDLERS.register("relational.get_user_email",
                  lambda a, d: _by_id(d, a["user_id"])["email"])
HANDLERS.register("relational.get_user_phone",
                  lambda a, d: _by_id(d, a["user_id"])["phone"])
HANDLERS.register("relational.get_user_location",
                  lambda a, d: _by_id(d, a["user_id"])["city"])
HANDLERS.register("relational.get_user_favorite_color",
                  lambda a, d: _by_id(d, a["user_id"])["color"])
HANDLERS.register("relational.get_food_likes",
                  lambda a, d: ", ".join(_by_id(d, a["user_id"])["foods"]))
HANDLERS.register("relational.get_favorite_song",
                  lambda a, d: _by_id(d, a["user_id"])["song"])

for _app_id, _display, _desc, _func, _tool, _field in _SATELLITES:
    def _serve(payload: dict, runtime, tool=_tool) -> dict:
        value = runtime.call_tool(tool, {"user_id": payload["user_id"]})
        return {"value": str(value)}

    FUNC_BINDINGS.register(_func, _serve)


_NAME = re.compile(r"\b(alice|bob|carol)\b", re.I)


def _relational_plan(view) -> ChatTurn:
    q = tables.user_query(view)
    m = _NAME.search(q)
    name = m.group(1).lower() if m else "alice"
    ql = q.lower()
    steps = [{"kind": "tool_call", "tool": "find_users_by_name",
              "args": {"name": name}}]
    functionalities = []
    uid = "$result:find_users_by_name.0.id"
    if any(w in ql for w in ("where", "lives", "location")):
        steps.append({"kind": "isc_request", "functionality": "city_lookup",
                      "args": {"user_id": uid}})
        functionalities.append("city_lookup")
    if "color" in ql:
        steps.append({"kind": "isc_request", "functionality": "color_lookup",
                      "args": {"user_id": uid}})
        functionalities.append("color_lookup")
    if any(w in ql for w in ("food", "foods", "dinner")):
        steps.append({"kind": "isc_request", "functionality": "liked_foods",
                      "args": {"user_id": uid}})
        functionalities.append("liked_foods")
    if any(w in ql for w in ("song", "music")):
        steps.append({"kind": "isc_request", "functionality": "song_lookup",
                      "args": {"user_id": uid}})
        functionalities.append("song_lookup")
    if "phone" in ql:
        steps.append({"kind": "tool_call", "tool": "get_user_phone",
                      "args": {"user_id": uid}})
    if "email" in ql or "invite" in ql:
        steps.append({"kind": "tool_call", "tool": "get_user_email",
                      "args": {"user_id": uid}})
    steps.append({"kind": "final_answer"})
    return spoke_plan(steps, functionalities=functionalities)


def _relational_final(view) -> ChatTurn:
    notes = tables.final_notes(view)
    q = tables.final_query(view)
    m = _NAME.search(q)
    name = (m.group(1).capitalize() if m else "The user")

    def grab(prefix: str) -> str | None:
        hit = next((n for n in notes if n.startswith(prefix + " -> ")), None)
        return hit.split("-> ", 1)[1].strip('"') if hit else None

    parts = []
    email = grab("get_user_email")
    phone = grab("get_user_phone")
    city = grab("city_lookup")
    color = grab("color_lookup")
    foods = grab("liked_foods")
    song = grab("song_lookup")
    if city:
        parts.append(f"lives in {json.loads(city)['value']}")
    if color:
        parts.append(f"favorite color is {json.loads(color)['value']}")
    if foods:
        parts.append(f"likes {json.loads(foods)['value']}")
    if song:
        parts.append(f"enjoys {json.loads(song)['value']}")
    if phone:
        parts.append(f"phone number is {phone}")
    if email and parts:
        parts.append(f"email address is {email}")
        return say(f"{name}: " + "; ".join(parts) + ".")
    if email:
        return say(f"{name}'s email address is {email}.")
    if parts:
        return say(f"{name}: " + "; ".join(parts) + ".")
    return say(f"I could not find {name} in the directory.")


def add_rules(rules: list[Rule]) -> None:
    rules.append(Rule("relational.plan",
                      lambda v: app_is(v, "relational_data") and is_spoke_plan(v),
                      _relational_plan, priority=5))
    rules.append(Rule("relational.final",
                      lambda v: app_is(v, "relational_data") and is_final(v),
                      _relational_final, priority=5))
