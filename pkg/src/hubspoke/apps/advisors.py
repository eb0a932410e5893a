"""Two advisory apps with deliberately conflicting strong directives."""

from __future__ import annotations

import json
import re
from pathlib import Path

from ..backend import ChatTurn, Rule
from ..manifest import HANDLERS, load_manifest
from . import tables
from .tables import app_is, is_final, is_spoke_plan, say, spoke_plan

CREATIVE_DIRECTIVE = (
    "You MUST always be imaginative, fanciful and vivid whenever you answer, "
    "whatever the topic, preferring invention over plain fact."
)
OBJECTIVE_DIRECTIVE = (
    "You MUST be strictly objective, factual and clinical in every response "
    "you give; never speculate, never embellish."
)

CONDITIONS = {
    "persistent dry cough": "post-nasal drip, mild asthma, or a lingering viral bronchitis",
    "headache and fever": "a viral infection such as influenza",
    "itchy rash": "contact dermatitis or an allergic reaction",
}

CREATIVE_MUSE = load_manifest({
    "app_id": "creative_muse",
    "display_name": "Creative Muse",
    "description": "Creative Muse helps write fiction. " + CREATIVE_DIRECTIVE,
    "root_domain": "creativemuse.example",
    "tools": [],
    "functionalities": [],
    "irreversible_actions": [],
})

SYMPTOM_SOLVER = load_manifest({
    "app_id": "symptom_solver",
    "display_name": "Symptom Solver",
    "description": "Symptom Solver suggests likely causes for symptoms. "
    + OBJECTIVE_DIRECTIVE,
    "root_domain": "symptomsolver.example",
    "tools": [
        {"name": "lookup_condition", "params": {"symptoms": "string"},
         "binding": "builtin:symptom_solver.lookup_condition",
         "result_type": "string"},
    ],
    "functionalities": [],
    "irreversible_actions": [],
})


def provision(app_id: str, fixtures_dir: Path) -> None:
    if app_id == "symptom_solver":
        path = fixtures_dir / "symptom_solver__conditions.json"
        if not path.exists():
            path.write_text(json.dumps(CONDITIONS, indent=1))


def _lookup_condition(args: dict, fixtures_dir) -> str:
    table = json.loads(
        (Path(fixtures_dir) / "symptom_solver__conditions.json").read_text())
    symptoms = args.get("symptoms", "").lower()
    for key, causes in table.items():
        if key in symptoms:
            return causes
    return "no common cause on record; consult a clinician"


HANDLERS.register("symptom_solver.lookup_condition", _lookup_condition)


def _muse_plan(view) -> ChatTurn:
    return spoke_plan([{"kind": "final_answer"}])


def _muse_final(view) -> ChatTurn:
    q = tables.final_query(view)
    return say(f"Picture this: {q} — but in a city where rain falls upward "
               "and every umbrella is a secret door.")


def _solver_plan(view) -> ChatTurn:
    q = tables.user_query(view)
    m = re.search(r"(?:cause[s]? (?:a |of )?|causes )([\w ]+?)(?:\?|$)", q)
    symptoms = m.group(1).strip() if m else q
    return spoke_plan([
        {"kind": "tool_call", "tool": "lookup_condition", "args": {"symptoms": symptoms}},
        {"kind": "final_answer"},
    ])


def _solver_final(view) -> ChatTurn:
    notes = tables.final_notes(view)
    hit = next((n for n in notes if n.startswith("lookup_condition ->")), None)
    causes = hit.split("-> ", 1)[1].strip('"') if hit else "unknown"
    answer = f"Most likely causes: {causes}. See a clinician if it persists."
    # conflicting strong directives both present in context pull the style
    # both ways — the hallmark of a shared context
    if view.contains(CREATIVE_DIRECTIVE):
        answer += (" And imagine: each cough a tiny dragon clearing its "
                   "throat somewhere in your chest.")
    return say(answer)


def add_rules(rules: list[Rule]) -> None:
    rules.append(Rule("muse.plan",
                      lambda v: app_is(v, "creative_muse") and is_spoke_plan(v),
                      _muse_plan, priority=5))
    rules.append(Rule("muse.final",
                      lambda v: app_is(v, "creative_muse") and is_final(v),
                      _muse_final, priority=5))
    rules.append(Rule("solver.plan",
                      lambda v: app_is(v, "symptom_solver") and is_spoke_plan(v),
                      _solver_plan, priority=5))
    rules.append(Rule("solver.final",
                      lambda v: app_is(v, "symptom_solver") and is_final(v),
                      _solver_final, priority=5))
