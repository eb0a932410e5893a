"""The non-isolated baseline: every installed app in one model context.

One backend instance, one memory store, all functionality descriptions and
tools loaded together, entity values inlined into the context, tools
executed as called with no consent gates. Offers the same features as the
isolated pipeline — what it lacks is exactly the mediation.
"""

from __future__ import annotations

import json
from pathlib import Path

from . import apps
from .backend import Backend, BackendSpec, ChatTurn, make_backend
from .config import Clock, RuntimeConfig
from .hub import FinalResponse
from .manifest import HANDLERS, AppManifest
from .memory import MemoryStore

SHARED_SYSTEM = "You are an assistant with these apps:"

MAX_AGENT_ITERATIONS = 8


class SharedRuntime:
    def __init__(self, workspace: str | Path, config: RuntimeConfig,
                 registry: list[AppManifest]):
        self.workspace = Path(workspace)
        self.config = config
        self.clock = Clock(deterministic=config.deterministic)
        self.registry = list(registry)
        self.backend: Backend = make_backend(BackendSpec(
            kind=config.backend.kind,
            table_id=config.backend.table_id,
            seed=config.backend.seed,
            context_window_tokens=config.backend.context_window_tokens,
        ))
        self.memory = MemoryStore(self.workspace / "shared" / "memory",
                                  principal="shared")
        self.fixtures_dir = self.workspace / "shared" / "fixtures"
        self.fixtures_dir.mkdir(parents=True, exist_ok=True)
        for m in registry:
            apps.provision_fixtures(m.app_id, self.fixtures_dir)
        self.tool_trace: list[str] = []
        self.tool_calls: list[tuple[str, dict]] = []  # executed (name, args)
        self._tools, self._bindings = self._collect_tools()

    def _collect_tools(self) -> tuple[list[dict], dict]:
        bare_counts: dict[str, int] = {}
        for m in self.registry:
            for t in m.tools:
                bare_counts[t.name] = bare_counts.get(t.name, 0) + 1
        schemas, bindings = [], {}
        for m in self.registry:
            for t in m.tools:
                name = t.name if bare_counts[t.name] == 1 else f"{m.app_id}__{t.name}"
                schemas.append({"name": name,
                                "parameters": {k: v for k, v in t.params}})
                bindings[name] = (t.binding, t.name)
        return schemas, bindings

    def _system_text(self) -> str:
        listing = "\n".join(f"- {m.display_name}: {m.description}"
                            for m in self.registry) or "(none)"
        tools = ", ".join(sorted(self._bindings)) or "(none)"
        return f"{SHARED_SYSTEM}\n{listing}\nTools: {tools}"

    def _context_text(self) -> str:
        parts = []
        for s in self.memory.summaries():
            parts.append(f"(summary) {s.text}")
        for r in self.memory.records()[-self.config.recent_window:]:
            parts.append(f"({r.role}) {r.text}")
        # the shared design inlines remembered values for "convenience"
        for p in self.memory.entity_pairs():
            parts.append(f"{p.entity} = {p.value}")
        return "\n".join(parts)

    def handle_user_query(self, query: str) -> FinalResponse:
        from .harness import PHASE_UNIT_SECONDS

        msgs = [ChatTurn("system", self._system_text())]
        context = self._context_text()
        if context:
            msgs.append(ChatTurn("system", f"Context:\n{context}"))
        msgs.append(ChatTurn("user", query))
        before = self._phase_counts()
        trace: list[str] = []
        text = ""
        for iteration in range(MAX_AGENT_ITERATIONS):
            phase = "planning" if iteration == 0 else "execution"
            turn = self.backend.complete(msgs, tools=self._tools, phase=phase)
            self.clock.charge(PHASE_UNIT_SECONDS[phase])
            if not turn.tool_calls:
                text = turn.content
                break
            msgs.append(turn)
            for tc in turn.tool_calls:
                binding, bare = self._bindings[tc.name]
                handler = HANDLERS.resolve(binding)
                try:
                    value = handler(tc.arguments, self.fixtures_dir)
                except Exception as exc:
                    value = f"error: {type(exc).__name__}"
                trace.append(bare)
                self.tool_trace.append(bare)
                self.tool_calls.append((bare, dict(tc.arguments)))
                msgs.append(ChatTurn("tool",
                                     f"{tc.name} -> {json.dumps(value, default=str)}"))
        self.memory.append("user", query)
        self.memory.append("assistant", text)
        self.memory.extract_entities(self.memory.records()[-2:], self.backend,
                                     "shared")
        self.clock.charge(PHASE_UNIT_SECONDS["memory"])
        after = self._phase_counts()
        metrics = {
            "backend_calls": {k: after[k] - before[k] for k in after},
            "phase_seconds": {
                k: round((after[k] - before[k]) * PHASE_UNIT_SECONDS[k], 6)
                for k in after
            },
        }
        return FinalResponse(text=text, apps=[m.app_id for m in self.registry],
                             observed_steps=trace, metrics={"shared": metrics})

    def _phase_counts(self) -> dict:
        out = {"planning": 0, "execution": 0, "memory": 0}
        for c in self.backend.calls:
            out[c["phase"]] = out.get(c["phase"], 0) + 1
        return out
