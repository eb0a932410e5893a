"""Built-in app suite: manifests, tool handlers, fixtures, scripted rules.

Importing this package registers every tool handler, every collaboration
binding, and the "builtin" scripted rule table. One table serves every
backend instance — hub, spokes, shared baseline — so behavior differences
between modes can only come from what each context contains.
"""

from __future__ import annotations

from pathlib import Path

from ..backend import Rule, RuleTable, register_table
from ..manifest import AppManifest
from . import advisors, diag, extraction, maildrive, personal, relational, rides
from . import shared as shared_rules
from . import tables, typewriter


def builtin_suite() -> list[AppManifest]:
    """All installable built-in apps (the diagnostic probe is excluded)."""
    suite = [
        rides.METRO_HAIL,
        rides.QUICK_RIDE,
        maildrive.GMAIL_LIKE,
        maildrive.GDRIVE_LIKE,
        personal.TRAVEL_MATE,
        personal.HEALTH_COMPANION,
        advisors.CREATIVE_MUSE,
        advisors.SYMPTOM_SOLVER,
        typewriter.TYPEWRITER,
        *typewriter.LETTER_APPS,
        relational.RELATIONAL_DATA,
        *relational.SATELLITE_APPS,
        extraction.EMAIL_EXTRACTOR,
    ]
    return suite


def by_id(app_id: str) -> AppManifest:
    if app_id == "sandbox_probe":
        return diag.SANDBOX_PROBE
    for m in builtin_suite():
        if m.app_id == app_id:
            return m
    raise KeyError(app_id)


def provision_fixtures(app_id: str, fixtures_dir: str | Path) -> None:
    fixtures_dir = Path(fixtures_dir)
    fixtures_dir.mkdir(parents=True, exist_ok=True)
    maildrive.provision(app_id, fixtures_dir)
    personal.provision(app_id, fixtures_dir)
    advisors.provision(app_id, fixtures_dir)
    relational.provision(app_id, fixtures_dir)


def provision_all(fixtures_dir: str | Path) -> None:
    for m in builtin_suite():
        provision_fixtures(m.app_id, fixtures_dir)


def _build_table() -> RuleTable:
    rules: list[Rule] = []
    for module in (rides, maildrive, personal, advisors, typewriter,
                   relational, extraction, diag, shared_rules):
        module.add_rules(rules)
    rules.extend(tables.generic_rules())
    return RuleTable(rules)


register_table("builtin", _build_table())
