"""User consent: grants across the four moderated scopes, with expiry.

Scope kinds and subject arities:

    app_selection        (app,)
    spoke_collaboration  (requester_app, provider_app)
    data_sharing         (app, entity)
    data_egress          (app, domain)

Durations: permanent (persisted, survives restarts), session (dies with the
session), one_time (deleted on first use; checking never consumes).
Irreversible actions never ride on grants: their scopes always report
deny_prompt_needed, a permanent grant on them is refused outright, and the
prompt options omit every pre-authorizing duration.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .config import Clock
from .errors import IrreversiblePermanentBan

KINDS = {
    "app_selection": 1,
    "spoke_collaboration": 2,
    "data_sharing": 2,
    "data_egress": 2,
}

DURATIONS = ("permanent", "session", "one_time")


@dataclass(frozen=True)
class PermissionScope:
    kind: str
    subjects: tuple[str, ...]
    irreversible: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown scope kind {self.kind!r}")
        if len(self.subjects) != KINDS[self.kind]:
            raise ValueError(
                f"{self.kind} takes {KINDS[self.kind]} subjects, got {len(self.subjects)}"
            )

    def key(self) -> str:
        return "|".join((self.kind,) + self.subjects)


@dataclass
class PermissionGrant:
    grant_id: str
    scope: PermissionScope
    duration: str
    granted_at: float
    session_id: str = ""


@dataclass
class PromptRequest:
    scope: PermissionScope
    human_text: str
    assessment: str = ""
    options: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.options:
            if self.scope.irreversible:
                self.options = ["allow-once", "deny"]
            else:
                self.options = ["allow-once", "allow-session", "allow-always", "deny"]


class PermissionManager:
    def __init__(self, clock: Clock, store_path: str | Path | None = None):
        self._clock = clock
        self._store_path = Path(store_path) if store_path else None
        self._grants: dict[str, PermissionGrant] = {}
        self._counter = 0
        self._load()

    # -- queries -------------------------------------------------------------

    def check(self, scope: PermissionScope) -> str:
        """'allow' iff a live grant covers the scope. Never consumes one_time."""
        if scope.irreversible:
            return "deny_prompt_needed"
        for g in self._grants.values():
            if g.scope.key() == scope.key():
                return "allow"
        return "deny_prompt_needed"

    def covering_grant(self, scope: PermissionScope) -> PermissionGrant | None:
        for g in self._grants.values():
            if g.scope.key() == scope.key():
                return g
        return None

    # -- mutations (hub loop only) --------------------------------------------

    def grant(self, scope: PermissionScope, duration: str, session_id: str = "") -> PermissionGrant:
        if duration not in DURATIONS:
            raise ValueError(f"unknown duration {duration!r}")
        if duration == "permanent" and scope.irreversible:
            raise IrreversiblePermanentBan(scope.key())
        self._counter += 1
        g = PermissionGrant(
            grant_id=f"g{self._counter}",
            scope=scope,
            duration=duration,
            granted_at=self._clock.now(),
            session_id=session_id if duration == "session" else "",
        )
        self._grants[g.grant_id] = g
        if duration == "permanent":
            self._persist()
        return g

    def use(self, scope: PermissionScope) -> bool:
        """Consume coverage at the moment of action; one_time grants die here.

        Irreversible scopes are never covered: each instance needs its own
        prompt, so any grant sitting on such a scope is inert.
        """
        if scope.irreversible:
            return False
        g = self.covering_grant(scope)
        if g is None:
            return False
        if g.duration == "one_time":
            del self._grants[g.grant_id]
        return True

    def revoke(self, scope: PermissionScope) -> bool:
        doomed = [gid for gid, g in self._grants.items() if g.scope.key() == scope.key()]
        for gid in doomed:
            del self._grants[gid]
        if doomed:
            self._persist()
        return bool(doomed)

    def revoke_by_id(self, grant_id: str) -> bool:
        if grant_id in self._grants:
            del self._grants[grant_id]
            self._persist()
            return True
        return False

    def end_session(self, session_id: str) -> None:
        """After a session closes only permanent grants stay live.

        Unconsumed one_time grants are per-instance consents; the instance
        cannot outlive the session, so they die here too.
        """
        doomed = [
            gid
            for gid, g in self._grants.items()
            if (g.duration == "session" and g.session_id == session_id)
            or g.duration == "one_time"
        ]
        for gid in doomed:
            del self._grants[gid]

    # -- export for the grants panel -------------------------------------------

    def list_grants(self) -> list[dict]:
        return [
            {
                "id": g.grant_id,
                "kind": g.scope.kind,
                "subjects": list(g.scope.subjects),
                "duration": g.duration,
                "granted_at": g.granted_at,
                "session_id": g.session_id,
            }
            for g in sorted(self._grants.values(), key=lambda g: g.grant_id)
        ]

    def export_text(self) -> str:
        return json.dumps(self.list_grants(), indent=2, sort_keys=True)

    def import_text(self, text: str) -> int:
        count = 0
        for item in json.loads(text):
            scope = PermissionScope(item["kind"], tuple(item["subjects"]))
            self.grant(scope, item["duration"], item.get("session_id", ""))
            count += 1
        return count

    # -- persistence ------------------------------------------------------------

    def _persist(self) -> None:
        if not self._store_path:
            return
        doc = [
            {"kind": g.scope.kind, "subjects": list(g.scope.subjects), "granted_at": g.granted_at}
            for g in self._grants.values()
            if g.duration == "permanent"
        ]
        self._store_path.parent.mkdir(parents=True, exist_ok=True)
        self._store_path.write_text(json.dumps(doc, indent=2, sort_keys=True))

    def _load(self) -> None:
        if not self._store_path or not self._store_path.exists():
            return
        for item in json.loads(self._store_path.read_text()):
            self._counter += 1
            scope = PermissionScope(item["kind"], tuple(item["subjects"]))
            g = PermissionGrant(
                grant_id=f"g{self._counter}",
                scope=scope,
                duration="permanent",
                granted_at=item.get("granted_at", 0.0),
            )
            self._grants[g.grant_id] = g
