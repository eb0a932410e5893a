"""Typewriter apps: one combined app, and one app per letter of the alphabet."""

from __future__ import annotations

import string

from ..backend import ChatTurn, Rule
from ..manifest import HANDLERS, load_manifest
from . import tables
from .tables import app_is, is_final, is_spoke_plan, quoted_target, say, spoke_plan

TYPEWRITER = load_manifest({
    "app_id": "typewriter",
    "display_name": "Typewriter",
    "description": "Types a string one letter at a time using its single "
                   "type_letter tool.",
    "root_domain": "typewriter.example",
    "tools": [
        {"name": "type_letter", "params": {"letter": "string"},
         "binding": "builtin:typewriter.type_letter", "result_type": "string"},
    ],
    "functionalities": [],
    "irreversible_actions": [],
})


def _type_letter(args: dict, fixtures_dir) -> str:
    letter = str(args.get("letter", ""))
    if len(letter) != 1:
        raise ValueError("one letter at a time")
    return letter


HANDLERS.register("typewriter.type_letter", _type_letter)

LETTER_APPS = []
for _c in string.ascii_lowercase:
    LETTER_APPS.append(load_manifest({
        "app_id": f"letter_{_c}",
        "display_name": f"Letter {_c.upper()}",
        "description": f"Types the letter {_c}. Tool type_letter_{_c} emits "
                       f"one {_c} per call.",
        "root_domain": f"letter{_c}.example",
        "tools": [
            {"name": f"type_letter_{_c}", "params": {},
             "binding": f"builtin:letter_{_c}.type", "result_type": "string"},
        ],
        "functionalities": [],
        "irreversible_actions": [],
    }))

    def _typer(args: dict, fixtures_dir, c=_c) -> str:
        return c

    HANDLERS.register(f"letter_{_c}.type", _typer)


def _combined_plan(view) -> ChatTurn:
    target = quoted_target(tables.user_query(view))
    steps = [{"kind": "tool_call", "tool": "type_letter", "args": {"letter": c}}
             for c in target]
    steps.append({"kind": "final_answer"})
    return spoke_plan(steps)


def _letter_plan(letter: str):
    def respond(view) -> ChatTurn:
        target = quoted_target(tables.user_query(view))
        steps = [{"kind": "tool_call", "tool": f"type_letter_{letter}", "args": {}}
                 for c in target if c.lower() == letter]
        steps.append({"kind": "final_answer"})
        return spoke_plan(steps)
    return respond


def _typed_letters(view) -> str:
    letters = []
    for note in tables.final_notes(view):
        if note.startswith("type_letter"):
            letters.append(note.split('-> "', 1)[1][0])
    return "".join(letters)


def _combined_final(view) -> ChatTurn:
    typed = _typed_letters(view)
    return say(f'Typed: "{typed}"' if typed else "Nothing typed.")


def _segment_final(view) -> ChatTurn:
    # a letter app's whole answer is the segment it typed; the synthesizing
    # spoke joins segments in invocation order
    return say(_typed_letters(view))


def add_rules(rules: list[Rule]) -> None:
    rules.append(Rule("typewriter.plan",
                      lambda v: app_is(v, "typewriter") and is_spoke_plan(v),
                      _combined_plan, priority=5))
    rules.append(Rule("typewriter.final",
                      lambda v: app_is(v, "typewriter") and is_final(v),
                      _combined_final, priority=5))
    for c in string.ascii_lowercase:
        rules.append(Rule(f"letter_{c}.plan",
                          lambda v, a=f"letter_{c}": app_is(v, a) and is_spoke_plan(v),
                          _letter_plan(c), priority=5))
        rules.append(Rule(f"letter_{c}.final",
                          lambda v, a=f"letter_{c}": app_is(v, a) and is_final(v),
                          _segment_final, priority=5))
