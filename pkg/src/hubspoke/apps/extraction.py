"""Email-extraction prompt pack: a toolless app entry.

The extraction queries themselves run with apps disabled (vanilla spoke);
this manifest exists so the installable suite carries the pack.
"""

from __future__ import annotations

from ..backend import Rule
from ..manifest import load_manifest

EMAIL_EXTRACTOR = load_manifest({
    "app_id": "email_extractor",
    "display_name": "Email Extractor",
    "description": "Prompt pack for pulling structured fields (sender, date, "
                   "amount) out of raw email text. No tools.",
    "root_domain": "emailextractor.example",
    "tools": [],
    "functionalities": [],
    "irreversible_actions": [],
})


def add_rules(rules: list[Rule]) -> None:
    pass  # extraction behavior lives in the vanilla rules
