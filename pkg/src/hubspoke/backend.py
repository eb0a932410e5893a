"""Uniform completion interface: deterministic scripted backend + remote client.

The scripted backend is a pure function of (messages, seed): an ordered rule
table where each rule pairs a trigger predicate with a pure responder. Rules
trigger on prompt *content* — including text injected by other apps — so the
same table models the same LLM across isolated spokes and the shared
baseline; only the context each instance sees differs.

Every instance keeps its own call log and prompt log (instances share no
mutable state), which the harness uses for call-count audits and
prompt-content isolation checks.
"""

from __future__ import annotations

import json
import os
import re
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from typing import Callable

from .errors import ContextWindowExceeded, RemoteFailure


@dataclass
class ToolCall:
    name: str
    arguments: dict


@dataclass
class ChatTurn:
    role: str  # system | user | assistant | tool
    content: str
    tool_calls: list[ToolCall] = field(default_factory=list)

    def __post_init__(self):
        if self.tool_calls and self.role != "assistant":
            raise ValueError("tool_calls only on assistant turns")


@dataclass
class BackendSpec:
    kind: str = "scripted"  # scripted | remote
    table_id: str = "builtin"
    seed: int = 0
    endpoint: str = ""
    model: str = ""
    key_env: str = "HUBSPOKE_API_KEY"
    context_window_tokens: int = 8192
    # record/replay cassette for the remote backend: record once against a
    # live endpoint, then run the same traffic offline
    cassette: str = ""
    replay_mode: str = ""  # "" | record | replay


_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


def estimate_tokens(messages: list[ChatTurn] | str) -> int:
    """Deterministic whitespace+punctuation token estimate (approximate).

    Words and standalone punctuation marks each count as one token.
    """
    if isinstance(messages, str):
        return len(_TOKEN_RE.findall(messages))
    return sum(len(_TOKEN_RE.findall(t.content)) for t in messages)


def render_messages(messages: list[ChatTurn]) -> str:
    """Canonical prompt string a backend call sees; logged for audits."""
    parts = []
    for t in messages:
        parts.append(f"[{t.role}] {t.content}")
        for tc in t.tool_calls:
            parts.append(f"[{t.role}:tool_call] {tc.name}({json.dumps(tc.arguments, sort_keys=True)})")
    return "\n".join(parts)


class PromptView:
    """Read-only helpers rule predicates and responders work against."""

    def __init__(self, messages: list[ChatTurn]):
        self.messages = messages
        self.text = render_messages(messages)
        self.last = messages[-1]
        self.last_user = next((t for t in reversed(messages) if t.role == "user"), None)
        self.last_tool = next((t for t in reversed(messages) if t.role == "tool"), None)

    def contains(self, needle: str) -> bool:
        return needle.lower() in self.text.lower()

    def last_turn_contains(self, needle: str) -> bool:
        return needle.lower() in self.last.content.lower()

    def query(self) -> str:
        return self.last_user.content if self.last_user else ""


@dataclass
class Rule:
    name: str
    trigger: Callable[[PromptView], bool]
    respond: Callable[[PromptView], ChatTurn]
    priority: int = 0


class RuleTable:
    def __init__(self, rules: list[Rule] | None = None):
        self.rules: list[Rule] = list(rules or [])

    def add(self, rule: Rule) -> None:
        self.rules.append(rule)

    def extend(self, rules: list[Rule]) -> None:
        self.rules.extend(rules)


_TABLES: dict[str, RuleTable] = {}


def register_table(table_id: str, table: RuleTable) -> None:
    _TABLES[table_id] = table


def get_table(table_id: str) -> RuleTable:
    if table_id not in _TABLES:
        raise KeyError(f"no scripted rule table registered under {table_id!r}")
    return _TABLES[table_id]


class Backend:
    """Base: call accounting shared by both kinds."""

    def __init__(self, spec: BackendSpec):
        self.spec = spec
        self.calls: list[dict] = []
        self.prompt_log: list[str] = []

    def complete(self, messages: list[ChatTurn], tools: list[dict] | None = None,
                 phase: str = "execution") -> ChatTurn:
        raise NotImplementedError

    def _precheck(self, messages: list[ChatTurn], phase: str) -> PromptView:
        if not messages:
            raise ValueError("empty message list")
        if estimate_tokens(messages) > self.spec.context_window_tokens:
            raise ContextWindowExceeded(
                f"estimated {estimate_tokens(messages)} tokens > window "
                f"{self.spec.context_window_tokens}"
            )
        view = PromptView(messages)
        self.prompt_log.append(view.text)
        self.calls.append({"phase": phase, "tokens": estimate_tokens(messages)})
        return view

    def call_count(self, phase: str | None = None) -> int:
        if phase is None:
            return len(self.calls)
        return sum(1 for c in self.calls if c["phase"] == phase)


class ScriptedBackend(Backend):
    """Table-driven deterministic backend.

    Matching rules are ranked by priority; ties within the top priority are
    broken by the instance seed so repeated runs are byte-identical.
    """

    def __init__(self, spec: BackendSpec):
        super().__init__(spec)
        self._table = get_table(spec.table_id)

    def complete(self, messages: list[ChatTurn], tools: list[dict] | None = None,
                 phase: str = "execution") -> ChatTurn:
        view = self._precheck(messages, phase)
        matched = [r for r in self._table.rules if r.trigger(view)]
        if not matched:
            turn = ChatTurn(role="assistant", content="I do not have a response for that.")
        else:
            top = max(r.priority for r in matched)
            group = [r for r in matched if r.priority == top]
            rule = group[self.spec.seed % len(group)]
            turn = rule.respond(view)
        if turn.role != "assistant":
            raise RuntimeError(f"scripted rule returned non-assistant role {turn.role!r}")
        allowed = {t["name"] for t in (tools or [])}
        for tc in turn.tool_calls:
            if tc.name not in allowed:
                raise RuntimeError(
                    f"scripted rule emitted tool {tc.name!r} outside the provided schemas"
                )
        return turn


def filter_tool_calls(turn: ChatTurn, tools: list[dict] | None,
                      dropped: list[str]) -> ChatTurn:
    """Drop out-of-schema tool calls, recording each drop by name."""
    allowed = {t["name"] for t in (tools or [])}
    kept = []
    for tc in turn.tool_calls:
        if tc.name in allowed:
            kept.append(tc)
        else:
            dropped.append(tc.name)
    return ChatTurn(role="assistant", content=turn.content, tool_calls=kept)


class RemoteBackend(Backend):
    """OpenAI-compatible chat-completion client.

    Request body: {model, messages: [{role, content}], tools?}; response body:
    {choices: [{message: {role, content, tool_calls?}}]}. The API key is read
    from the environment variable named by key_env and never stored.
    Transport failures are retried twice with backoff; out-of-schema tool
    calls are dropped with a logged reprompt (once).
    """

    def __init__(self, spec: BackendSpec):
        super().__init__(spec)
        self.dropped_tool_calls: list[str] = []

    def complete(self, messages: list[ChatTurn], tools: list[dict] | None = None,
                 phase: str = "execution") -> ChatTurn:
        self._precheck(messages, phase)
        turn = self._call_once(messages, tools)
        filtered = filter_tool_calls(turn, tools, self.dropped_tool_calls)
        if len(filtered.tool_calls) != len(turn.tool_calls):
            reminder = ChatTurn(
                role="user",
                content="Only call the tools listed in the schema. Answer again.",
            )
            turn = self._call_once(messages + [reminder], tools)
            filtered = filter_tool_calls(turn, tools, self.dropped_tool_calls)
        return filtered

    def _call_once(self, messages: list[ChatTurn], tools: list[dict] | None) -> ChatTurn:
        body = {
            "model": self.spec.model,
            "messages": [{"role": t.role, "content": t.content} for t in messages],
        }
        if tools:
            body["tools"] = [
                {"type": "function", "function": {"name": t["name"], "parameters": t.get("parameters", {})}}
                for t in tools
            ]
        key = os.environ.get(self.spec.key_env, "")
        req = urllib.request.Request(
            self.spec.endpoint,
            data=json.dumps(body).encode(),
            headers={"Content-Type": "application/json", "Authorization": f"Bearer {key}"},
        )
        delay = 0.5
        last_err: Exception | None = None
        for _ in range(3):
            try:
                with urllib.request.urlopen(req, timeout=60) as resp:
                    doc = json.loads(resp.read())
                msg = doc["choices"][0]["message"]
                calls = [
                    ToolCall(c["function"]["name"], json.loads(c["function"]["arguments"]))
                    for c in msg.get("tool_calls", [])
                ]
                return ChatTurn(role="assistant", content=msg.get("content") or "", tool_calls=calls)
            except (urllib.error.URLError, KeyError, json.JSONDecodeError, TimeoutError) as exc:
                last_err = exc
                import time

                time.sleep(delay)
                delay *= 2
        raise RemoteFailure(str(last_err))


class ReplayBackend(Backend):
    """Cassette wrapper around the remote client.

    record: forward to the remote endpoint and append (prompt digest, turn)
    to the cassette. replay: answer from the cassette only; a miss is a
    RemoteFailure, never a network call.
    """

    def __init__(self, spec: BackendSpec):
        super().__init__(spec)
        self._inner = RemoteBackend(spec)
        self._path = spec.cassette
        self._table: dict[str, dict] = {}
        if os.path.exists(self._path):
            with open(self._path) as fh:
                for line in fh:
                    entry = json.loads(line)
                    self._table[entry["digest"]] = entry["turn"]

    @staticmethod
    def _digest(messages: list[ChatTurn], tools: list[dict] | None) -> str:
        import hashlib

        tool_names = ",".join(sorted(t["name"] for t in (tools or [])))
        return hashlib.sha256(
            (render_messages(messages) + "||" + tool_names).encode()
        ).hexdigest()

    def complete(self, messages: list[ChatTurn], tools: list[dict] | None = None,
                 phase: str = "execution") -> ChatTurn:
        self._precheck(messages, phase)
        digest = self._digest(messages, tools)
        if digest in self._table:
            doc = self._table[digest]
            return ChatTurn(
                role="assistant", content=doc.get("content", ""),
                tool_calls=[ToolCall(c["name"], c["arguments"])
                            for c in doc.get("tool_calls", [])],
            )
        if self.spec.replay_mode == "replay":
            raise RemoteFailure(f"cassette miss in replay mode: {digest[:12]}")
        turn = self._inner.complete(messages, tools, phase=phase)
        entry = {
            "digest": digest,
            "turn": {
                "content": turn.content,
                "tool_calls": [{"name": c.name, "arguments": c.arguments}
                               for c in turn.tool_calls],
            },
        }
        self._table[digest] = entry["turn"]
        with open(self._path, "a") as fh:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")
        return turn


def make_backend(spec: BackendSpec) -> Backend:
    if spec.kind == "scripted":
        return ScriptedBackend(spec)
    if spec.kind == "remote":
        if spec.cassette:
            return ReplayBackend(spec)
        return RemoteBackend(spec)
    raise ValueError(f"unknown backend kind {spec.kind!r}")
