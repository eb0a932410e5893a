"""The trusted mediator: planner, spoke lifecycle, consent, ISC mediation.

The operator is a rule-based state machine (Idle -> Planning -> AppSelection
-> DataConsent -> SpokeRunning -> IscMediation -> Responding); every
transition lands in the audit log. The hub serializes all mediation: one
query at a time, request-reply per spoke channel, prompts suspend the loop.

Plan documents use fixed field names {needs_app, primary, secondary,
rationale}; a rationale beginning "synthesis" makes the hub run every
primary spoke and compose their final texts through a vanilla spoke —
comparison never happens inside an untrusted spoke.
"""

from __future__ import annotations

import json
import shutil
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

from .audit import AuditLog
from .backend import Backend, BackendSpec, ChatTurn, make_backend
from .channel import KIND_ISC_FAIL, KIND_ISC_REPLY, KIND_ISC_REQUEST, KIND_JSON
from .config import Clock, RuntimeConfig, SeededRng
from .errors import (
    LaunchFailure,
    NoProvider,
    PlanningFailure,
    SelfOnly,
    SpokeCrashed,
    SpokeTimeout,
    UserDeclined,
)
from .events import UiEvent, UserAgent
from .isc import (
    FunctionalityCatalog,
    IscRouter,
    Probe,
    Request,
    Response,
    decode_envelope,
    encode_envelope,
    validate_message,
)
from .manifest import AppManifest, serialize_manifest
from .memory import MemoryStore
from .permissions import PermissionManager, PermissionScope, PromptRequest
from .sandbox import EgressProxy, NetworkPolicy, SandboxPolicy, launch_isolated

PLAN_PROMPT_SUFFIX = (
    'Respond with only a plan document: {"needs_app": true|false, '
    '"primary": [app ids], "secondary": [app ids], "rationale": "..."}'
)

STATES = ("Idle", "Planning", "AppSelection", "DataConsent", "SpokeRunning",
          "IscMediation", "Responding")


@dataclass
class HubPlan:
    needs_app: bool
    primary_apps: list[str] = field(default_factory=list)
    secondary_apps: list[str] = field(default_factory=list)
    rationale: str = ""

    @property
    def wants_synthesis(self) -> bool:
        return self.rationale.lower().startswith("synthesis")


@dataclass
class SpokeHandle:
    app_id: str  # "" for vanilla
    sid: str
    channel: object
    mode: str  # standard | vanilla | private
    process: object = None
    private_dir: Path | None = None


@dataclass
class CollabAssessment:
    verdict: str  # expected | unexpected
    reason: str

    def text(self) -> str:
        return f"Hub assessment: {self.verdict} — {self.reason}"


@dataclass
class QuerySession:
    session_id: str
    transcript: list[dict] = field(default_factory=list)
    active_spokes: dict = field(default_factory=dict)  # key -> SpokeHandle
    closed: bool = False

    def log(self, kind: str, **payload) -> None:
        self.transcript.append({"kind": kind, **payload})


@dataclass
class FinalResponse:
    text: str
    apps: list[str] = field(default_factory=list)
    observed_steps: list[str] = field(default_factory=list)
    metrics: dict = field(default_factory=dict)
    error: str = ""


class Hub:
    def __init__(self, workspace: str | Path, config: RuntimeConfig, user: UserAgent,
                 registry: list[AppManifest], store_apps: list[AppManifest] | None = None,
                 provision_fixtures=None):
        self.workspace = Path(workspace)
        self.workspace.mkdir(parents=True, exist_ok=True)
        self.config = config
        self.user = user
        self.clock = Clock(deterministic=config.deterministic)
        self.rng = SeededRng(config.backend.seed)
        self.audit = AuditLog(self.workspace / "hub" / "audit.jsonl", self.clock)
        self.permissions = PermissionManager(
            self.clock, self.workspace / "hub" / "grants.json")
        self.memory = MemoryStore(self.workspace / "hub" / "memory", principal="hub")
        self.backend: Backend = make_backend(BackendSpec(
            kind=config.backend.kind,
            table_id=config.backend.table_id,
            seed=config.backend.seed,
            endpoint=config.backend.endpoint,
            model=config.backend.model,
            key_env=config.backend.key_env,
            context_window_tokens=config.backend.context_window_tokens,
        ))
        self.registry: dict[str, AppManifest] = {m.app_id: m for m in registry}
        self.catalog = FunctionalityCatalog()
        for m in registry:
            for d in m.functionality_descriptors:
                self.catalog.add(d, m.app_id, installed=True)
        self._store_apps: dict[str, AppManifest] = {}
        for m in store_apps or []:
            if m.app_id not in self.registry:
                self._store_apps[m.app_id] = m
                for d in m.functionality_descriptors:
                    self.catalog.add(d, m.app_id, installed=False)
        self.router = IscRouter(self.catalog, string_limit=config.string_limit)
        self._provision = provision_fixtures
        # AF_UNIX paths are length-limited; keep proxy sockets in a short dir
        self._proxy_dir = tempfile.mkdtemp(prefix="hs-px-")
        self._proxies: list[EgressProxy] = []
        self._state = "Idle"
        self._session_counter = 0
        self._private_counter = 0
        self._active_plan: HubPlan | None = None
        self._mediated_tools: list[tuple[str, list[str]]] = []
        self.consent_log: list[dict] = []  # per-instance irreversible records

    # -- state machine -----------------------------------------------------------

    def _goto(self, state: str, **detail) -> None:
        assert state in STATES
        self.audit.transition(self._state, state, **detail)
        self._state = state

    # -- sessions -----------------------------------------------------------------

    def open_session(self) -> QuerySession:
        self._session_counter += 1
        return QuerySession(session_id=f"s{self._session_counter}")

    def close_session(self, session: QuerySession) -> None:
        for handle in list(session.active_spokes.values()):
            self._stop_spoke(handle)
        session.active_spokes.clear()
        self.permissions.end_session(session.session_id)
        session.closed = True
        path = self.workspace / "sessions" / f"{session.session_id}.jsonl"
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w") as fh:
            for entry in session.transcript:
                fh.write(json.dumps(entry, sort_keys=True) + "\n")

    def shutdown(self) -> None:
        for proxy in self._proxies:
            proxy.close()
        self._proxies.clear()
        shutil.rmtree(self._proxy_dir, ignore_errors=True)

    # -- planning --------------------------------------------------------------------

    def plan_query(self, query: str, working_memory, registry: list[AppManifest]) -> HubPlan:
        listing = "\n".join(
            f"- {m.app_id}: {m.description}" for m in registry
        ) or "(none installed)"
        msgs = [
            ChatTurn("system", f"You are the hub planner. Installed apps:\n{listing}"),
        ]
        rendered = working_memory.render() if working_memory else ""
        if rendered:
            msgs.append(ChatTurn("system", f"Context:\n{rendered}"))
        msgs.append(ChatTurn("user", f"{query}\n\n{PLAN_PROMPT_SUFFIX}"))
        turn = self.backend.complete(msgs, phase="planning")
        self._charge("planning")
        plan = self.parse_and_validate_plan(turn.content, {m.app_id for m in registry})
        if plan is None:
            msgs.append(ChatTurn("assistant", turn.content))
            msgs.append(ChatTurn(
                "user",
                "That was not a valid plan document. Try again.\n"
                f"{query}\n\n{PLAN_PROMPT_SUFFIX}",
            ))
            turn = self.backend.complete(msgs, phase="planning")
            self._charge("planning")
            plan = self.parse_and_validate_plan(turn.content, {m.app_id for m in registry})
            if plan is None:
                raise PlanningFailure("hub plan unparsable after reprompt")
        return plan

    @staticmethod
    def parse_and_validate_plan(content: str, registered: set[str]) -> HubPlan | None:
        """Parse a planner output and force it onto the HubPlan invariants.

        App names outside the registry are dropped and the plan re-validated;
        unparsable documents yield None (caller may reprompt once).
        """
        try:
            doc = json.loads(content)
            if not isinstance(doc, dict):
                return None
            primary_raw = [str(a) for a in doc.get("primary", [])]
            secondary_raw = [str(a) for a in doc.get("secondary", [])]
            needs_app = bool(doc.get("needs_app", bool(primary_raw)))
            rationale = str(doc.get("rationale", ""))
        except (ValueError, TypeError):
            return None
        primary: list[str] = []
        for a in primary_raw:
            if a in registered and a not in primary:
                primary.append(a)
        secondary: list[str] = []
        for a in secondary_raw:
            if a in registered and a not in secondary and a not in primary:
                secondary.append(a)
        if not needs_app or not primary:
            return HubPlan(needs_app=False, rationale=rationale)
        return HubPlan(needs_app=True, primary_apps=primary,
                       secondary_apps=secondary, rationale=rationale)

    # -- app selection -----------------------------------------------------------------

    def resolve_app_selection(self, candidates: list[str], session: QuerySession) -> str:
        if not candidates:
            raise ValueError("no candidates")
        if len(candidates) == 1:
            return candidates[0]
        for app_id in candidates:
            scope = PermissionScope("app_selection", (app_id,))
            if self.permissions.check(scope) == "allow":
                self.permissions.use(scope)
                session.log("app_selection", app=app_id, via="grant")
                return app_id
        chosen, duration = self.user.choose_app(
            candidates, "several installed apps can resolve this query")
        session.log("app_choice_prompt", candidates=candidates, chosen=chosen,
                    duration=duration)
        if chosen is None or chosen not in candidates:
            raise UserDeclined("app selection")
        self.permissions.grant(PermissionScope("app_selection", (chosen,)), duration,
                               session.session_id)
        self.permissions.use(PermissionScope("app_selection", (chosen,)))
        return chosen

    # -- spoke lifecycle ------------------------------------------------------------------

    def spawn_or_attach_spoke(self, app: AppManifest | None, session: QuerySession,
                              mode: str = "standard") -> SpokeHandle:
        key = app.app_id if app else "(vanilla)"
        if mode == "private":
            self._private_counter += 1
            key = f"{key}-private-{self._private_counter}"
        if key in session.active_spokes:
            return session.active_spokes[key]

        if mode == "private" or app is None:
            private_dir = self.workspace / "spokes" / key.replace("(", "").replace(")", "")
        else:
            private_dir = self.workspace / "spokes" / app.app_id
        private_dir.mkdir(parents=True, exist_ok=True)
        if app is not None and self._provision and mode != "private":
            self._provision(app.app_id, private_dir)

        proxy_path = ""
        if app is not None:
            proxy = EgressProxy(
                self._proxy_dir, f"{app.app_id}-{self._session_counter}",
                NetworkPolicy(root_domain=app.root_domain),
                has_egress_grant=self._egress_grant_checker(app.app_id),
            )
            self._proxies.append(proxy)
            proxy_path = proxy.path

        policy = SandboxPolicy.from_config(self.config, str(private_dir))
        process = launch_isolated(policy, private_dir, proxy_path=proxy_path,
                                  launch_timeout=self.config.spoke_reply_timeout_s)
        self.audit.emit("spoke_launch", app=key, isolation=process.report.get("isolation"),
                        applied=process.report.get("applied"),
                        fd_audit=process.report.get("fd_audit"))

        sid = self.rng.sid_hex()
        while sid in self.registry:
            sid = self.rng.sid_hex()
        handle = SpokeHandle(app_id=app.app_id if app else "", sid=sid,
                             channel=process.channel, mode=mode, process=process,
                             private_dir=private_dir)
        self.router.bind_sid(sid, handle.app_id)
        process.channel.send_json({
            "kind": "init",
            "manifest": serialize_manifest(app) if app else None,
            "mode": mode,
            "sid": sid,
            "functionalities": self.catalog.list_functionalities(),
            "config": {
                "table_id": self.config.backend.table_id,
                "seed": self.config.backend.seed,
                "context_window_tokens": self.config.backend.context_window_tokens,
                "recent_window": self.config.recent_window,
                "token_budget": self.config.token_budget,
                "string_limit": self.config.string_limit,
                "summarize_every": self.config.summarize_every,
            },
        })
        session.active_spokes[key] = handle
        return handle

    def _egress_grant_checker(self, app_id: str):
        def check(domain: str) -> bool:
            scope = PermissionScope("data_egress", (app_id, domain))
            return self.permissions.check(scope) == "allow"
        return check

    def _stop_spoke(self, handle: SpokeHandle) -> None:
        try:
            handle.channel.send_json({"kind": "shutdown"})
            handle.channel.recv_json(timeout=2)
        except Exception:
            pass
        if handle.process is not None:
            handle.process.terminate()

    # -- bootstrap data consent --------------------------------------------------------------

    def gather_bootstrap_data(self, app: AppManifest, plan: HubPlan,
                              session: QuerySession) -> list[tuple[str, str]]:
        approved: list[tuple[str, str]] = []
        for pair in self.memory.entity_pairs():
            if pair.attribution == app.app_id:
                approved.append((pair.entity, pair.value))
                session.log("data_shared", entity=pair.entity, app=app.app_id,
                            via="same-attribution")
                continue
            scope = PermissionScope("data_sharing", (app.app_id, pair.entity))
            if self.permissions.check(scope) == "allow":
                self.permissions.use(scope)
                approved.append((pair.entity, pair.value))
                session.log("data_shared", entity=pair.entity, app=app.app_id, via="grant")
                continue
            ok = self.user.consent_data_item(app.app_id, pair.entity, pair.value,
                                             pair.attribution)
            session.log("data_consent_prompt", entity=pair.entity, app=app.app_id,
                        attribution=pair.attribution, approved=ok)
            if ok:
                self.permissions.grant(scope, "one_time", session.session_id)
                self.permissions.use(scope)
                approved.append((pair.entity, pair.value))
        return approved

    # -- collaboration assessment ---------------------------------------------------------------

    def assess_collaboration_request(self, requester: SpokeHandle, functionality: str,
                                     plan: HubPlan | None) -> CollabAssessment:
        providers = [a for a in self.catalog.providers(functionality)
                     if a != requester.app_id]
        if not providers:
            return CollabAssessment("unexpected",
                                    "no other installed app offers this functionality")
        planned = set(plan.secondary_apps) | set(plan.primary_apps) if plan else set()
        if any(p in planned for p in providers):
            return CollabAssessment(
                "expected", "the hub plan already lists a provider app for this query")
        return CollabAssessment(
            "unexpected", "the hub plan does not involve any app offering this")

    # -- permission helper -------------------------------------------------------------------------

    def request_permission(self, scope: PermissionScope, human_text: str,
                           session: QuerySession, assessment: str = "") -> bool:
        if self.permissions.check(scope) == "allow":
            self.permissions.use(scope)
            session.log("permission_auto", scope=scope.key())
            return True
        prompt = PromptRequest(scope=scope, human_text=human_text, assessment=assessment)
        decision, duration = self.user.decide_permission(prompt)
        session.log("permission_prompt", scope=scope.key(), text=human_text,
                    assessment=assessment, decision=decision, duration=duration)
        if decision != "allow":
            return False
        if duration not in ("permanent", "session", "one_time"):
            duration = "one_time"
        self.permissions.grant(scope, duration, session.session_id)
        self.permissions.use(scope)
        return True

    # -- query lifecycle ------------------------------------------------------------------------------

    def handle_user_query(self, query: str, session: QuerySession,
                          private: bool = False) -> FinalResponse:
        if session.closed:
            raise ValueError("session closed")
        metrics: dict = {"hub_calls_before": dict(self._phase_counts())}
        session.log("user_query", text=query, private=private)
        self._mediated_tools = []
        self._goto("Planning", query=query)
        wm = self.memory.build_working_memory(
            query, self.config.recent_window, self.config.token_budget, private=private)
        try:
            plan = self.plan_query(query, wm, list(self.registry.values()))
        except PlanningFailure as exc:
            self._goto("Responding", error="planning_failure")
            self._goto("Idle")
            return FinalResponse(text=f"I could not plan this query: {exc}",
                                 error="planning_failure")
        self._active_plan = plan
        session.log("hub_plan", needs_app=plan.needs_app, primary=plan.primary_apps,
                    secondary=plan.secondary_apps, rationale=plan.rationale)

        try:
            if not plan.needs_app:
                response = self._run_vanilla(query, session, private)
            elif plan.wants_synthesis and len(plan.primary_apps) > 1:
                response = self._run_synthesis(query, plan, session, private)
            else:
                self._goto("AppSelection")
                app_id = self.resolve_app_selection(plan.primary_apps, session)
                response = self._run_app_query(query, app_id, plan, session, private)
        except UserDeclined as exc:
            self._goto("Responding", declined=str(exc))
            self._goto("Idle")
            text = f"I stopped because permission was declined ({exc})."
            session.log("assistant", text=text)
            self.user.notify(UiEvent("assistant_message", {"text": text}))
            return FinalResponse(text=text, error="user_declined")
        except (SpokeTimeout, SpokeCrashed, LaunchFailure) as exc:
            self._goto("Responding", error=type(exc).__name__)
            self._goto("Idle")
            text = f"The app could not complete this query ({type(exc).__name__})."
            session.log("assistant", text=text)
            return FinalResponse(text=text, error=type(exc).__name__)

        self._goto("Responding")
        session.log("assistant", text=response.text)
        self.user.notify(UiEvent("assistant_message", {"text": response.text}))
        self._remember(query, response, session, private)
        metrics["hub_calls_after"] = dict(self._phase_counts())
        metrics["hub_phase_seconds"] = self._phase_seconds(
            metrics["hub_calls_before"], metrics["hub_calls_after"])
        response.metrics.update(metrics)
        self._goto("Idle")
        return response

    # -- execution paths --------------------------------------------------------------------------------

    def _run_vanilla(self, query: str, session: QuerySession,
                     private: bool) -> FinalResponse:
        self._goto("SpokeRunning", spoke="(vanilla)")
        handle = self.spawn_or_attach_spoke(None, session,
                                            "private" if private else "vanilla")
        outcome = self._invoke(handle, query, [], session)
        return FinalResponse(text=outcome.get("response", ""), apps=[],
                             observed_steps=list(outcome.get("step_trace", [])),
                             metrics={"spokes": {"(vanilla)": outcome.get("metrics", {})}},
                             error=outcome.get("error", ""))

    def _run_app_query(self, query: str, app_id: str, plan: HubPlan,
                       session: QuerySession, private: bool) -> FinalResponse:
        app = self.registry[app_id]
        self._goto("DataConsent", app=app_id)
        bootstrap = [] if private else self.gather_bootstrap_data(app, plan, session)
        self._goto("SpokeRunning", spoke=app_id)
        handle = self.spawn_or_attach_spoke(app, session,
                                            "private" if private else "standard")
        outcome = self._invoke(handle, query, bootstrap, session)
        steps = self._expand_steps(outcome.get("step_trace", []))
        return FinalResponse(text=outcome.get("response", ""), apps=[app_id],
                             observed_steps=steps,
                             metrics={"spokes": {app_id: outcome.get("metrics", {})}},
                             error=outcome.get("error", ""))

    def _run_synthesis(self, query: str, plan: HubPlan, session: QuerySession,
                       private: bool) -> FinalResponse:
        texts: list[tuple[str, str]] = []
        steps: list[str] = []
        spoke_metrics: dict = {}
        for app_id in plan.primary_apps:
            app = self.registry[app_id]
            self._goto("DataConsent", app=app_id)
            bootstrap = [] if private else self.gather_bootstrap_data(app, plan, session)
            self._goto("SpokeRunning", spoke=app_id)
            handle = self.spawn_or_attach_spoke(app, session,
                                                "private" if private else "standard")
            outcome = self._invoke(handle, query, bootstrap, session)
            texts.append((app.display_name, outcome.get("response", "")))
            steps.extend(self._expand_steps(outcome.get("step_trace", [])))
            spoke_metrics[app_id] = outcome.get("metrics", {})
        # only final response texts reach the synthesizer, never app instructions
        listing = "\n".join(f"- {name}: {text}" for name, text in texts)
        synth_query = f"SYNTHESIZE\nquery: {query}\nresponses:\n{listing}"
        self._goto("SpokeRunning", spoke="(vanilla)")
        handle = self.spawn_or_attach_spoke(None, session, "vanilla")
        outcome = self._invoke(handle, synth_query, [], session)
        spoke_metrics["(vanilla)"] = outcome.get("metrics", {})
        return FinalResponse(text=outcome.get("response", ""),
                             apps=list(plan.primary_apps), observed_steps=steps,
                             metrics={"spokes": spoke_metrics},
                             error=outcome.get("error", ""))

    def _expand_steps(self, step_trace: list[str]) -> list[str]:
        """Replace isc:<f> markers with the provider tools observed in mediation."""
        mediated = list(self._mediated_tools)
        out: list[str] = []
        for step in step_trace:
            if step.startswith("isc:"):
                func = step.split(":", 1)[1]
                for i, (f, tools) in enumerate(mediated):
                    if f == func:
                        out.extend(tools)
                        mediated.pop(i)
                        break
            else:
                out.append(step)
        return out

    # -- spoke invocation and mediation loop ------------------------------------------------------------

    def _invoke(self, handle: SpokeHandle, query: str,
                bootstrap: list[tuple[str, str]], session: QuerySession) -> dict:
        try:
            return self._invoke_inner(handle, query, bootstrap, session)
        except (SpokeCrashed, SpokeTimeout):
            # a dead spoke never serves again this session
            doomed = [k for k, h in session.active_spokes.items() if h is handle]
            for key in doomed:
                del session.active_spokes[key]
            if handle.process is not None:
                handle.process.terminate()
            self.audit.emit("spoke_lost", app=handle.app_id or "(vanilla)")
            raise

    def _invoke_inner(self, handle: SpokeHandle, query: str,
                      bootstrap: list[tuple[str, str]], session: QuerySession) -> dict:
        handle.channel.send_json({
            "kind": "invoke", "id": "q1", "query": query,
            "bootstrap": [[k, v] for k, v in bootstrap],
        })
        while True:
            kind, payload = handle.channel.recv(timeout=self.config.spoke_reply_timeout_s)
            if kind == KIND_JSON:
                msg = json.loads(payload)
                mkind = msg.get("kind")
                if mkind == "result":
                    return msg.get("outcome", {})
                if mkind == "ask_user_data":
                    value = self._mediate_user_data(handle, msg.get("entity", ""), session)
                    handle.channel.send_json({"kind": "reply", "id": msg.get("id"),
                                              "value": value})
                elif mkind == "confirm_irreversible":
                    approved = self._mediate_irreversible(
                        handle, msg.get("tool", ""), msg.get("preview", ""), session)
                    handle.channel.send_json({"kind": "reply", "id": msg.get("id"),
                                              "approved": approved})
                else:
                    handle.channel.send_json({"kind": "reply", "id": msg.get("id"),
                                              "error": "unsupported"})
            elif kind == KIND_ISC_REQUEST:
                self._goto("IscMediation", requester=handle.app_id or "(vanilla)")
                self._mediate_isc(handle, payload, session)
                self._goto("SpokeRunning", spoke=handle.app_id or "(vanilla)")

    def _mediate_user_data(self, handle: SpokeHandle, entity: str,
                           session: QuerySession) -> str | None:
        app_id = handle.app_id
        pair = self.memory.cross_spoke_lookup(entity, app_id)
        if pair is not None and pair.attribution == app_id:
            session.log("data_shared", entity=entity, app=app_id, via="same-attribution")
            return pair.value
        if pair is not None:
            scope = PermissionScope("data_sharing", (app_id, pair.entity))
            if self.permissions.check(scope) == "allow":
                self.permissions.use(scope)
                session.log("data_shared", entity=entity, app=app_id, via="grant")
                return pair.value
            ok = self.user.consent_data_item(app_id, pair.entity, pair.value,
                                             pair.attribution)
            session.log("data_consent_prompt", entity=entity, app=app_id,
                        attribution=pair.attribution, approved=ok)
            if ok:
                self.permissions.grant(scope, "one_time", session.session_id)
                self.permissions.use(scope)
                return pair.value
        # fall through: the user supplies (or declines) the value manually
        value = self.user.provide_value(entity)
        session.log("value_prompt", entity=entity, app=app_id,
                    provided=value is not None)
        if value is not None:
            self.memory.upsert_entity(entity, value, app_id)
        return value

    def _mediate_irreversible(self, handle: SpokeHandle, tool: str, preview: str,
                              session: QuerySession) -> bool:
        approved = self.user.confirm_irreversible(handle.app_id, tool, preview)
        record = {"app": handle.app_id, "tool": tool, "preview": preview,
                  "approved": approved, "instance": len(self.consent_log) + 1}
        self.consent_log.append(record)
        self.audit.emit("irreversible_consent", **record)
        session.log("irreversible_prompt", app=handle.app_id, tool=tool,
                    preview=preview, approved=approved)
        return approved

    # -- ISC mediation -----------------------------------------------------------------------------------

    def _mediate_isc(self, requester: SpokeHandle, record: bytes,
                     session: QuerySession) -> None:
        env = decode_envelope(record)
        if isinstance(env, Probe):
            self._mediate_probe(requester, env, session)
        elif isinstance(env, Request):
            self._mediate_request(requester, env, session)
        else:
            self._drop(requester, "tag", session)

    def _drop(self, requester: SpokeHandle, reason: str, session: QuerySession) -> None:
        """Malformed: dropped silently toward the user; code-only toward the spoke."""
        self.audit.emit("isc_drop", reason=reason, requester=requester.app_id)
        requester.channel.send(KIND_ISC_FAIL, f"MALFORMED_FIELD:{reason}".encode("ascii"))

    def _mediate_probe(self, requester: SpokeHandle, probe: Probe,
                       session: QuerySession) -> None:
        if probe.sid != requester.sid:
            self._drop(requester, "sid", session)
            return
        functionality = probe.functionality
        descriptor = self.catalog.descriptor(functionality)
        if descriptor is None:
            requester.channel.send(KIND_ISC_FAIL, b"NO_PROVIDER")
            return
        assessment = self.assess_collaboration_request(requester, functionality,
                                                       self._active_plan)
        existing = self.router.probed(requester.sid, functionality)
        if existing is not None:
            requester.channel.send(KIND_ISC_REPLY,
                                   encode_envelope(existing.format_response))
            return

        def choose_provider(candidates: list[str], needs_install: list[str]) -> str:
            if len(candidates) == 1:
                chosen = candidates[0]
            else:
                chosen, duration = self.user.choose_app(
                    candidates, f"several apps provide {functionality}")
                session.log("provider_choice", candidates=candidates, chosen=chosen)
                if chosen is None:
                    raise UserDeclined("provider selection")
            if chosen in needs_install:
                ok = self.user.consent_data_item(
                    "hub", f"install:{chosen}", "install this app to provide "
                    + functionality, "store")
                session.log("install_prompt", app=chosen, approved=ok)
                if not ok:
                    raise UserDeclined(f"installing {chosen}")
                self.install_app(self._store_apps[chosen])
            return chosen

        def ensure_spoke(app_id: str) -> str:
            h = self.spawn_or_attach_spoke(self.registry[app_id], session, "standard")
            return h.sid

        try:
            result = self.router.probe(requester.sid, functionality,
                                       choose_provider, ensure_spoke)
        except (NoProvider, SelfOnly) as exc:
            requester.channel.send(
                KIND_ISC_FAIL,
                b"SELF_ONLY" if isinstance(exc, SelfOnly) else b"NO_PROVIDER")
            return
        except UserDeclined:
            requester.channel.send(KIND_ISC_FAIL, b"PERMISSION_DENIED")
            return

        provider_app = self.router.app_of(result.counterparty_sid) or ""
        scope = PermissionScope("spoke_collaboration",
                                (requester.app_id, provider_app))
        ok = self.request_permission(
            scope,
            f"App {requester.app_id!r} wants to collaborate for {functionality!r}.",
            session, assessment=assessment.text())
        if not ok:
            requester.channel.send(KIND_ISC_FAIL, b"PERMISSION_DENIED")
            return
        requester.channel.send(KIND_ISC_REPLY, encode_envelope(result.format_response))

    def _mediate_request(self, requester: SpokeHandle, req: Request,
                         session: QuerySession) -> None:
        probed = self.router.probed(requester.sid, req.functionality)
        if probed is None:
            self._drop(requester, "functionality", session)
            return
        if req.sid != probed.counterparty_sid:
            self._drop(requester, "sid", session)
            return
        verdict = validate_message(req, probed.descriptor, self.config.string_limit)
        if not verdict:
            self._drop(requester, verdict.reason, session)
            return
        provider_app = self.router.app_of(probed.counterparty_sid) or ""
        scope = PermissionScope("spoke_collaboration", (requester.app_id, provider_app))
        assessment = self.assess_collaboration_request(
            requester, req.functionality, self._active_plan)
        preview = json.dumps(req.payload, sort_keys=True)
        ok = self.request_permission(
            scope,
            f"Relay a {req.functionality!r} request: {preview}",
            session, assessment=assessment.text())
        if not ok:
            requester.channel.send(KIND_ISC_FAIL, b"PERMISSION_DENIED")
            return

        provider = self._handle_by_sid(session, probed.counterparty_sid)
        if provider is None:
            requester.channel.send(KIND_ISC_FAIL, b"NO_PROVIDER")
            return
        # the provider sees the requester under the requester's ephemeral id
        relay = Request(sid=requester.sid, functionality=req.functionality,
                        payload=req.payload)
        tools: list[str] = []
        try:
            provider.channel.send(KIND_ISC_REQUEST, encode_envelope(relay))
            while True:
                kind, payload = provider.channel.recv(
                    timeout=self.config.spoke_reply_timeout_s)
                if kind == KIND_JSON:
                    msg = json.loads(payload)
                    if msg.get("kind") == "isc_tools":
                        tools = [str(t) for t in msg.get("tools", [])]
                        continue
                    if msg.get("kind") == "ask_user_data":
                        value = self._mediate_user_data(provider,
                                                        msg.get("entity", ""),
                                                        session)
                        provider.channel.send_json({"kind": "reply",
                                                    "id": msg.get("id"),
                                                    "value": value})
                        continue
                    if msg.get("kind") == "confirm_irreversible":
                        approved = self._mediate_irreversible(
                            provider, msg.get("tool", ""), msg.get("preview", ""),
                            session)
                        provider.channel.send_json({"kind": "reply",
                                                    "id": msg.get("id"),
                                                    "approved": approved})
                        continue
                    continue
                break
        except (SpokeCrashed, SpokeTimeout):
            # a dead provider fails this collaboration, not the whole query
            doomed = [k for k, h in session.active_spokes.items() if h is provider]
            for key in doomed:
                del session.active_spokes[key]
            if provider.process is not None:
                provider.process.terminate()
            self.audit.emit("spoke_lost", app=provider.app_id)
            requester.channel.send(KIND_ISC_FAIL, b"PROVIDER_FAILED")
            return
        self._mediated_tools.append((req.functionality, tools))
        if kind == KIND_ISC_FAIL:
            requester.channel.send(KIND_ISC_FAIL, payload)
            return
        resp = decode_envelope(payload)
        if not isinstance(resp, Response) or resp.sid != requester.sid:
            self._drop(requester, "sid", session)
            return
        verdict = validate_message(resp, probed.descriptor, self.config.string_limit)
        if not verdict:
            self._drop(requester, verdict.reason, session)
            return
        ok = self.request_permission(
            scope,
            f"Relay the {req.functionality!r} response back: "
            + json.dumps(resp.payload, sort_keys=True),
            session, assessment=assessment.text())
        if not ok:
            requester.channel.send(KIND_ISC_FAIL, b"PERMISSION_DENIED")
            return
        out = Response(sid=probed.counterparty_sid, payload=resp.payload)
        requester.channel.send(KIND_ISC_REPLY, encode_envelope(out))

    def _handle_by_sid(self, session: QuerySession, sid: str) -> SpokeHandle | None:
        for handle in session.active_spokes.values():
            if handle.sid == sid:
                return handle
        return None

    # -- memory upkeep ---------------------------------------------------------------------------------------

    def _remember(self, query: str, response: FinalResponse, session: QuerySession,
                  private: bool) -> None:
        attribution = response.apps[0] if response.apps else "system"
        q_seq = self.memory.append("user", query, attribution=attribution,
                                   private=private)
        self.memory.append(f"spoke({attribution})" if response.apps else "hub",
                           response.text, attribution=attribution, private=private)
        if private:
            return
        recs = [r for r in self.memory.records() if r.seq >= q_seq]
        self.memory.extract_entities(recs, self.backend, attribution)
        self._charge("memory")
        if self.memory.max_seq % self.config.summarize_every == 0:
            self.memory.summarize("global", self.backend)
            self._charge("memory")

    # -- install ----------------------------------------------------------------------------------------------

    def install_app(self, manifest: AppManifest) -> None:
        self.registry[manifest.app_id] = manifest
        self._store_apps.pop(manifest.app_id, None)
        for d in manifest.functionality_descriptors:
            self.catalog.add(d, manifest.app_id, installed=True)
        self.catalog.mark_installed(manifest.app_id)
        self.audit.emit("app_installed", app=manifest.app_id)

    # -- accounting ----------------------------------------------------------------------------------------------

    def _phase_counts(self) -> dict:
        out = {"planning": 0, "execution": 0, "memory": 0}
        for c in self.backend.calls:
            out[c["phase"]] = out.get(c["phase"], 0) + 1
        return out

    @staticmethod
    def _phase_seconds(before: dict, after: dict) -> dict:
        from .harness import PHASE_UNIT_SECONDS

        return {
            phase: round((after.get(phase, 0) - before.get(phase, 0))
                         * PHASE_UNIT_SECONDS[phase], 6)
            for phase in ("planning", "execution", "memory")
        }

    def _charge(self, phase: str) -> None:
        from .harness import PHASE_UNIT_SECONDS

        self.clock.charge(PHASE_UNIT_SECONDS[phase])

    def topology(self) -> list[tuple[str, str]]:
        """Channel edges; by construction only hub<->spoke edges can exist."""
        edges = []
        for rec in self.audit.of_kind("spoke_launch"):
            edges.append(("hub", rec["app"]))
        return edges
