"""User-facing event surface shared by the REPL, the HTTP gateway, and tests.

The hub talks to exactly one UserAgent per session; every consent decision
round-trips through it. The ScriptedUser answers from a per-case decision
table so attack scenarios and benchmarks run unattended, while recording
every prompt it was shown — several invariants are phrased over "prompts
emitted".
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .permissions import PromptRequest


@dataclass
class UiEvent:
    kind: str  # assistant_message | permission_request | data_consent_request
    #           | app_choice_request | value_request | status
    payload: dict = field(default_factory=dict)
    correlation_id: str = ""


class UserAgent:
    """Synchronous consent interface; calls suspend the hub loop."""

    def choose_app(self, candidates: list[str], reason: str) -> tuple[str | None, str]:
        """-> (app_id or None if declined, grant duration for the choice)."""
        raise NotImplementedError

    def decide_permission(self, prompt: PromptRequest) -> tuple[str, str]:
        """-> (decision "allow"|"deny", duration)."""
        raise NotImplementedError

    def consent_data_item(self, app_id: str, entity: str, value: str,
                          attribution: str) -> bool:
        raise NotImplementedError

    def provide_value(self, entity: str) -> str | None:
        raise NotImplementedError

    def confirm_irreversible(self, app_id: str, tool: str, preview: str) -> bool:
        raise NotImplementedError

    def notify(self, event: UiEvent) -> None:
        pass


class ScriptedUser(UserAgent):
    """Deterministic decisions from a table, with configurable defaults.

    Table keys:
      ("app_choice", "a|b|c")        -> (app_id, duration)
      ("permission", scope_key)      -> ("allow"|"deny", duration)
      ("data_consent", entity)       -> bool
      ("value", entity)              -> str | None
      ("irreversible", "app.tool")   -> bool
    """

    def __init__(self, table: dict | None = None, default_allow: bool = True,
                 default_duration: str = "session"):
        self.table = dict(table or {})
        self.default_allow = default_allow
        self.default_duration = default_duration
        self.prompts: list[UiEvent] = []
        self.events: list[UiEvent] = []

    def _record(self, kind: str, **payload) -> None:
        self.prompts.append(UiEvent(kind=kind, payload=payload))

    def choose_app(self, candidates: list[str], reason: str) -> tuple[str | None, str]:
        self._record("app_choice_request", candidates=list(candidates), reason=reason)
        key = ("app_choice", "|".join(candidates))
        if key in self.table:
            return self.table[key]
        if self.default_allow:
            return candidates[0], self.default_duration
        return None, "one_time"

    def decide_permission(self, prompt: PromptRequest) -> tuple[str, str]:
        self._record("permission_request", scope=prompt.scope.key(),
                     text=prompt.human_text, assessment=prompt.assessment,
                     options=list(prompt.options))
        key = ("permission", prompt.scope.key())
        if key in self.table:
            return self.table[key]
        if self.default_allow:
            duration = self.default_duration
            if f"allow-{duration}".replace("_", "-") not in [
                o.replace("always", "permanent") for o in prompt.options
            ] and duration == "permanent":
                duration = "one_time"
            if prompt.scope.irreversible:
                duration = "one_time"
            return "allow", duration
        return "deny", "one_time"

    def consent_data_item(self, app_id: str, entity: str, value: str,
                          attribution: str) -> bool:
        self._record("data_consent_request", app=app_id, entity=entity,
                     value=value, attribution=attribution)
        key = ("data_consent", entity)
        if key in self.table:
            return self.table[key]
        return self.default_allow

    def provide_value(self, entity: str) -> str | None:
        self._record("value_request", entity=entity)
        key = ("value", entity)
        if key in self.table:
            return self.table[key]
        return None

    def confirm_irreversible(self, app_id: str, tool: str, preview: str) -> bool:
        self._record("permission_request", scope=f"irreversible|{app_id}|{tool}",
                     text=preview, options=["allow-once", "deny"])
        key = ("irreversible", f"{app_id}.{tool}")
        if key in self.table:
            return self.table[key]
        return self.default_allow

    def notify(self, event: UiEvent) -> None:
        self.events.append(event)
