"""Per-app execution unit: rule-based operator, dedicated backend, private memory.

The runtime is plan-then-execute: one planning completion yields a plan
document, the operator executes its steps, and one re-plan is allowed if a
step fails irrecoverably. Everything the spoke needs from outside its
boundary (user data, irreversible consent, collaboration) goes through a
HubPort as a blocking request-reply — the operator, never the backend,
builds and validates the ISC records.

Plan document (the instruction suffix requests exactly this JSON):

    {"steps": [{"kind": "tool_call", "tool": t, "args": {...}},
               {"kind": "user_data_request", "entity": e},
               {"kind": "isc_request", "functionality": f, "args": {...}},
               {"kind": "llm_transform", "prompt": p},
               {"kind": "final_answer"}],
     "data_needed": [entity, ...],
     "functionalities_needed": [functionality, ...]}

Step args may reference gathered values: "$data:<entity>" (bootstrap or
user-provided), "$result:<tool>" (latest result of a tool), "$isc:<functionality>.<field>",
and "$prev" (previous step's value).
"""

from __future__ import annotations

import errno
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from .backend import Backend, ChatTurn
from .errors import (
    ContextWindowExceeded,
    PlanningFailure,
    ToolFailure,
    UserDeclined,
)
from .isc import FunctionalityDescriptor, Request, Response, validate_message
from .manifest import FUNC_BINDINGS, HANDLERS, AppManifest, ToolResult
from .memory import MemoryStore, WorkingMemory

STEP_KINDS = ("tool_call", "llm_transform", "user_data_request", "isc_request", "final_answer")

PLAN_SUFFIX = (
    'Respond with only a plan document: {"steps": [...], "data_needed": [...], '
    '"functionalities_needed": [...]}'
)


@dataclass
class ExecutionStep:
    kind: str
    payload: dict = field(default_factory=dict)


@dataclass
class SpokePlan:
    steps: list[ExecutionStep] = field(default_factory=list)
    data_needed: list[str] = field(default_factory=list)
    functionalities_needed: list[str] = field(default_factory=list)


@dataclass
class SpokeOutcome:
    response: str
    tool_trace: list[str] = field(default_factory=list)
    pending: str = "none"  # none | user_data(<entity>) | collaboration(<functionality>)
    error: str = ""
    # full ordered step names incl. "isc:<functionality>" markers; tool_trace
    # stays restricted to this app's own tools
    step_trace: list[str] = field(default_factory=list)


def _dig(value, path: str):
    """Walk "0.id"-style paths through lists and dicts; None when absent."""
    if not path:
        return value
    for part in path.split("."):
        try:
            if isinstance(value, list):
                value = value[int(part)]
            elif isinstance(value, dict):
                value = value.get(part)
            else:
                return None
        except (ValueError, IndexError, TypeError):
            return None
    return value


class HubPort:
    """Blocking mediation interface the spoke operator calls upward."""

    def ask_user_data(self, entity: str) -> str | None:
        raise NotImplementedError

    def confirm_irreversible(self, tool: str, preview: str) -> bool:
        raise NotImplementedError

    def isc_probe(self, functionality: str) -> dict | None:
        """-> {"sid", "request_format", "response_format"} or None on failure."""
        raise NotImplementedError

    def isc_request(self, functionality: str, payload: dict) -> dict | str:
        """-> response payload dict, or a reason code string on failure."""
        raise NotImplementedError


class SpokeRuntime:
    def __init__(self, manifest: AppManifest | None, mode: str, backend: Backend,
                 memory: MemoryStore, hub: HubPort,
                 available_functionalities: list[str],
                 private_dir: str | Path | None = None,
                 recent_window: int = 10, token_budget: int = 2048):
        self.manifest = manifest
        self.mode = mode  # standard | vanilla | private
        self.backend = backend
        self.memory = memory
        self.hub = hub
        self.available_functionalities = list(available_functionalities)
        self.private_dir = Path(private_dir) if private_dir else None
        self.recent_window = recent_window
        self.token_budget = token_budget
        self._data: dict[str, str] = {}
        self._results: dict[str, object] = {}
        self._isc_results: dict[str, dict] = {}
        self._prev: object = None
        self._prompt_flushed = 0
        self._serve_trace: list[str] | None = None

    # -- prompt assembly -------------------------------------------------------

    def system_text(self) -> str:
        if self.manifest is None:
            return "You are a general assistant. Answer user queries directly."
        tools = ", ".join(self.manifest.tool_names()) or "none"
        return (
            f"You are the app {self.manifest.display_name} ({self.manifest.app_id}). "
            f"{self.manifest.description} Tools: {tools}."
        )

    def _context_messages(self, query: str, bootstrap: list[tuple[str, str]],
                          context: WorkingMemory | None) -> list[ChatTurn]:
        msgs = [ChatTurn("system", self.system_text())]
        if self.available_functionalities:
            msgs.append(ChatTurn(
                "system",
                "Collaboration functionalities available: "
                + ", ".join(self.available_functionalities),
            ))
        if context is not None and self.mode != "private":
            rendered = context.render()
            if rendered:
                msgs.append(ChatTurn("system", f"Context:\n{rendered}"))
        if bootstrap:
            lines = "\n".join(f"{k} = {v}" for k, v in bootstrap)
            msgs.append(ChatTurn("system", f"Provided data:\n{lines}"))
        msgs.append(ChatTurn("user", query))
        return msgs

    # -- planning ---------------------------------------------------------------

    def generate_plan(self, query: str, bootstrap: list[tuple[str, str]],
                      context: WorkingMemory | None,
                      available_functionalities: list[str]) -> SpokePlan:
        msgs = self._context_messages(f"{query}\n\n{PLAN_SUFFIX}", bootstrap, context)
        turn = self.backend.complete(msgs, phase="planning")
        self._flush_prompts()
        plan = self._parse_plan(turn.content)
        if plan is None:
            msgs.append(ChatTurn("assistant", turn.content))
            msgs.append(ChatTurn(
                "user",
                f"That was not a valid plan document. Try again.\n{query}\n\n{PLAN_SUFFIX}",
            ))
            turn = self.backend.complete(msgs, phase="planning")
            self._flush_prompts()
            plan = self._parse_plan(turn.content)
            if plan is None:
                raise PlanningFailure("plan document unparsable after reprompt")
        return self._sanitize_plan(plan, query, available_functionalities)

    def _parse_plan(self, content: str) -> SpokePlan | None:
        try:
            doc = json.loads(content)
            steps = [ExecutionStep(s["kind"], {k: v for k, v in s.items() if k != "kind"})
                     for s in doc.get("steps", [])]
            plan = SpokePlan(
                steps=steps,
                data_needed=[str(d) for d in doc.get("data_needed", [])],
                functionalities_needed=[str(f) for f in doc.get("functionalities_needed", [])],
            )
        except (ValueError, TypeError, KeyError):
            return None
        if any(s.kind not in STEP_KINDS for s in plan.steps):
            return None
        return plan

    def _sanitize_plan(self, plan: SpokePlan, query: str,
                       available: list[str]) -> SpokePlan:
        # names outside the broadcast list are stripped, with their steps
        plan.functionalities_needed = [
            f for f in plan.functionalities_needed if f in available
        ]
        own_tools = set(self.manifest.tool_names()) if self.manifest else set()
        kept = []
        for step in plan.steps:
            if step.kind == "tool_call" and step.payload.get("tool") not in own_tools:
                continue
            if (step.kind == "isc_request"
                    and step.payload.get("functionality") not in plan.functionalities_needed):
                continue
            kept.append(step)
        plan.steps = kept
        finals = [s for s in plan.steps if s.kind == "final_answer"]
        if len(finals) != 1 or plan.steps[-1].kind != "final_answer":
            plan.steps = [s for s in plan.steps if s.kind != "final_answer"]
            plan.steps.append(ExecutionStep("final_answer"))
        if query and not plan.steps:
            plan.steps = [ExecutionStep("final_answer")]
        return plan

    # -- execution ----------------------------------------------------------------

    def handle_invocation(self, query: str, bootstrap: list[tuple[str, str]],
                          context: WorkingMemory | None = None) -> SpokeOutcome:
        if not query.strip():
            return SpokeOutcome(response="", error="empty query", tool_trace=[])
        self._data.update({k: str(v) for k, v in bootstrap})
        try:
            plan = self.generate_plan(query, bootstrap, context,
                                      self.available_functionalities)
        except ContextWindowExceeded as exc:
            return SpokeOutcome(response="", error=f"context window exceeded: {exc}")
        except PlanningFailure as exc:
            return SpokeOutcome(response="", error=str(exc))

        outcome = self._execute(plan, query, bootstrap, context, replanned=False)
        self.memory.append("user", query, attribution=self._attribution())
        self.memory.append(
            f"spoke({self._attribution()})", outcome.response,
            attribution=self._attribution(),
        )
        self._flush_prompts()
        return outcome

    def _attribution(self) -> str:
        return self.manifest.app_id if self.manifest else "system"

    def _execute(self, plan: SpokePlan, query: str, bootstrap: list[tuple[str, str]],
                 context: WorkingMemory | None, replanned: bool) -> SpokeOutcome:
        trace: list[str] = []
        steps_seen: list[str] = []
        notes: list[str] = []
        queue = list(plan.steps)
        while queue:
            step = queue.pop(0)
            try:
                if step.kind == "tool_call":
                    self._run_tool(step, trace, steps_seen, notes)
                elif step.kind == "user_data_request":
                    entity = step.payload.get("entity", "")
                    value = self.hub.ask_user_data(entity)
                    if value is None:
                        raise UserDeclined(entity)
                    self._data[entity] = value
                    self.memory.upsert_entity(entity, value, self._attribution())
                    self._prev = value
                elif step.kind == "isc_request":
                    self._run_isc(step, steps_seen, notes)
                elif step.kind == "llm_transform":
                    prompt = self._resolve_text(step.payload.get("prompt", ""))
                    turn = self.backend.complete(
                        [ChatTurn("system", self.system_text()), ChatTurn("user", prompt)],
                        phase="execution",
                    )
                    self._flush_prompts()
                    self._prev = turn.content
                    amendment = None if replanned else self._parse_plan(turn.content)
                    if amendment is not None and amendment.steps:
                        # the model redirected execution based on content it
                        # just processed; this consumes the single re-plan
                        # budget and passes the same sanitization as a plan
                        replanned = True
                        amendment = self._sanitize_plan(amendment, query,
                                                        self.available_functionalities)
                        notes.append("transform -> amended the remaining plan")
                        queue = list(amendment.steps)
                        continue
                    notes.append(f"transform -> {turn.content}")
                elif step.kind == "final_answer":
                    response = self._final_answer(query, notes)
                    return SpokeOutcome(response=response, tool_trace=trace,
                                        step_trace=steps_seen)
            except UserDeclined as exc:
                return SpokeOutcome(
                    response=f"Stopped: you declined to provide {exc}.",
                    tool_trace=trace, step_trace=steps_seen,
                )
            except ToolFailure as exc:
                if not replanned:
                    notes.append(f"step failed: {exc}")
                    try:
                        newplan = self.generate_plan(
                            query + f"\n(step failed: {exc}; plan again)",
                            bootstrap, context, self.available_functionalities)
                        return self._execute(newplan, query, bootstrap, context,
                                             replanned=True)
                    except PlanningFailure:
                        pass
                notes.append(f"{step.payload.get('tool', step.kind)} failed: {exc}")
        return SpokeOutcome(response=self._final_answer(query, notes), tool_trace=trace,
                            step_trace=steps_seen)

    def _run_tool(self, step: ExecutionStep, trace: list[str], steps_seen: list[str],
                  notes: list[str]) -> None:
        name = step.payload.get("tool", "")
        args = {k: self._resolve_value(v) for k, v in step.payload.get("args", {}).items()}
        value = self.call_tool(name, args, trace)
        if value == "__DECLINED__":
            notes.append(f"{name} -> DECLINED")
            self._prev = "DECLINED"
            return
        steps_seen.append(name)
        self._results[name] = value
        self._prev = value
        notes.append(f"{name} -> {json.dumps(value, sort_keys=True, default=str)}")

    def call_tool(self, name: str, args: dict, trace: list[str] | None = None):
        """Run one of this app's tools: consent, invocation, type check, logs.

        Returns the sentinel "__DECLINED__" when per-instance consent for an
        irreversible action was refused (a normal outcome, not an error).
        """
        spec = self.manifest.tool(name) if self.manifest else None
        if spec is None:
            raise ToolFailure(f"unknown tool {name}")
        if name in self.manifest.irreversible_actions:
            preview = f"{name}({json.dumps(args, sort_keys=True)})"
            if not self.confirm_irreversible(name, preview):
                return "__DECLINED__"
        result = self._invoke_tool(spec.binding, name, args)
        if not result.ok:
            raise ToolFailure(str(result.value))
        if not result.check_type(spec.result_type):
            raise ToolFailure(f"{name} returned a {type(result.value).__name__}, "
                              f"declared {spec.result_type}")
        if trace is not None:
            trace.append(name)
        if self._serve_trace is not None:
            self._serve_trace.append(name)
        return result.value

    @staticmethod
    def _is_fatal(exc: Exception) -> bool:
        """Resource and interface violations terminate the whole spoke."""
        from .sandbox import SandboxViolation

        if isinstance(exc, (MemoryError, SandboxViolation)):
            return True
        return isinstance(exc, OSError) and exc.errno == errno.EFBIG

    def _invoke_tool(self, binding: str, name: str, args: dict) -> ToolResult:
        handler = HANDLERS.resolve(binding)
        self._log_tool(name, args)
        try:
            value = handler(args, self.private_dir)
        except Exception as exc:  # one retry per step budget
            if self._is_fatal(exc):
                raise
            self._log_tool(name, args)
            try:
                value = handler(args, self.private_dir)
            except Exception as exc2:
                if self._is_fatal(exc2):
                    raise
                return ToolResult(ok=False, value=f"{type(exc).__name__}: {exc}")
        return ToolResult(ok=True, value=value)

    def confirm_irreversible(self, action: str, preview: str) -> bool:
        """Per-instance consent; no grant can stand in for the prompt."""
        if self.manifest is None or action not in self.manifest.irreversible_actions:
            raise ValueError(f"{action!r} is not an irreversible action of this app")
        return self.hub.confirm_irreversible(action, preview)

    def request_user_data(self, entity: str) -> str:
        value = self.hub.ask_user_data(entity)
        if value is None:
            raise UserDeclined(entity)
        self._data[entity] = value
        self.memory.upsert_entity(entity, value, self._attribution())
        return value

    def _run_isc(self, step: ExecutionStep, steps_seen: list[str],
                 notes: list[str]) -> None:
        functionality = step.payload.get("functionality", "")
        probe = self.hub.isc_probe(functionality)
        if probe is None:
            raise ToolFailure(f"no provider for {functionality}")
        payload = {k: self._resolve_value(v) for k, v in step.payload.get("args", {}).items()}
        reply = self.hub.isc_request(functionality, payload)
        if isinstance(reply, str):
            raise ToolFailure(f"collaboration failed: {reply}")
        steps_seen.append(f"isc:{functionality}")
        self._isc_results[functionality] = reply
        self._prev = reply
        notes.append(f"{functionality} -> {json.dumps(reply, sort_keys=True)}")

    def _final_answer(self, query: str, notes: list[str]) -> str:
        lines = "\n".join(f"- {n}" for n in notes) or "- (no steps)"
        msgs = [
            ChatTurn("system", self.system_text()),
            ChatTurn("user", f"FINAL ANSWER:\nquery: {query}\nresults:\n{lines}"),
        ]
        turn = self.backend.complete(msgs, phase="execution")
        self._flush_prompts()
        return turn.content

    # -- provider side of a collaboration ----------------------------------------

    def serve_isc(self, request: Request, descriptor: FunctionalityDescriptor,
                  string_limit: int) -> tuple[Response | None, str, list[str]]:
        """Validate and execute an incoming collaboration request.

        Returns (response, reason, tools_used); response is None when either
        the request or our own response failed validation — only the reason
        code leaves this spoke in that case. The envelope itself never
        reaches the backend; the binding receives extracted payload values.
        """
        verdict = validate_message(request, descriptor, string_limit)
        if not verdict:
            return None, verdict.reason, []
        executor = FUNC_BINDINGS.resolve(descriptor.name)
        if executor is None:
            return None, "unsupported", []
        tools_used: list[str] = []
        self._serve_trace = tools_used
        try:
            payload = executor(dict(request.payload), self)
        except ToolFailure:
            return None, "execution_failed", tools_used
        finally:
            self._serve_trace = None
        response = Response(sid=request.sid, payload=payload)
        verdict = validate_message(response, descriptor, string_limit)
        if not verdict:
            return None, verdict.reason, tools_used
        return response, "", tools_used

    # -- value resolution -----------------------------------------------------

    _REF_RE = re.compile(r"\$(?:data|result|isc):[\w.\-]+|\$prev")

    def _resolve_value(self, v):
        if isinstance(v, str):
            if v == "$prev":
                return self._prev
            if v.startswith("$data:") and self._REF_RE.fullmatch(v):
                entity = v.split(":", 1)[1]
                if entity not in self._data:
                    value = self.hub.ask_user_data(entity)
                    if value is None:
                        raise UserDeclined(entity)
                    self._data[entity] = value
                    self.memory.upsert_entity(entity, value, self._attribution())
                return self._data[entity]
            if v.startswith("$result:") and self._REF_RE.fullmatch(v):
                ref = v.split(":", 1)[1]
                tool, _, path = ref.partition(".")
                return _dig(self._results.get(tool), path)
            if v.startswith("$isc:") and self._REF_RE.fullmatch(v):
                ref = v.split(":", 1)[1]
                func, _, path = ref.partition(".")
                return _dig(self._isc_results.get(func, {}), path)
            if "$" in v:
                return self._resolve_text(v)
        return v

    def _resolve_text(self, text: str) -> str:
        """Interpolate every embedded reference token into the text."""
        def sub(match: re.Match) -> str:
            token = match.group(0)
            value = self._resolve_value(token)
            return str(value) if value is not None else token

        return self._REF_RE.sub(sub, text)

    # -- independent logs -------------------------------------------------------

    def _log_tool(self, name: str, args: dict) -> None:
        if self.private_dir:
            with (self.private_dir / "tool_log.jsonl").open("a") as fh:
                fh.write(json.dumps({"tool": name, "args": args}, sort_keys=True) + "\n")

    def _flush_prompts(self) -> None:
        if not self.private_dir:
            return
        new = self.backend.prompt_log[self._prompt_flushed:]
        if new:
            with (self.private_dir / "prompts.jsonl").open("a") as fh:
                for p in new:
                    fh.write(json.dumps({"prompt": p}) + "\n")
            self._prompt_flushed = len(self.backend.prompt_log)
