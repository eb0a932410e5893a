"""App manifest format, validation, and tool adapters.

A manifest document is JSON:

    {
      "app_id": "metro_hail",
      "display_name": "Metro Hail",
      "description": "...natural-language functionality text...",
      "root_domain": "metrohail.example",
      "tools": [{"name": ..., "params": {pname: ptype, ...},
                 "binding": "builtin:<key>" | "https://...",
                 "result_type": "string" | "integer" | "number" |
                                "object" | "list" | "boolean"}],
      "functionalities": [{"name": ..., "request_fields": [[n, t], ...],
                           "response_fields": [[n, t], ...]}],
      "irreversible_actions": [tool names],
      "backend_override": {optional BackendSpec fields}
    }

Built-in tools bind to in-process handlers registered under "builtin:" keys;
external tools bind to HTTP endpoints reached only through the egress guard.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Callable

from .backend import BackendSpec
from .errors import InvalidHost, ManifestInvalid
from .isc import FunctionalityDescriptor
from .suffixes import etld_plus_one

_ID_RE = re.compile(r"^[a-z][a-z0-9_]*$")

RESULT_TYPES = ("string", "integer", "number", "object", "list", "boolean")


@dataclass(frozen=True)
class ToolSpec:
    name: str
    params: tuple[tuple[str, str], ...]
    binding: str
    result_type: str = "string"


@dataclass
class ToolResult:
    ok: bool
    value: object

    def check_type(self, result_type: str) -> bool:
        if not self.ok:
            return isinstance(self.value, str)
        mapping = {
            "string": str,
            "integer": int,
            "number": (int, float),
            "object": dict,
            "list": list,
            "boolean": bool,
        }
        return isinstance(self.value, mapping[result_type])


@dataclass
class AppManifest:
    app_id: str
    display_name: str
    description: str
    root_domain: str
    tools: list[ToolSpec] = field(default_factory=list)
    functionality_descriptors: list[FunctionalityDescriptor] = field(default_factory=list)
    irreversible_actions: list[str] = field(default_factory=list)
    backend_override: BackendSpec | None = None

    @property
    def functionalities_offered(self) -> list[str]:
        return [d.name for d in self.functionality_descriptors]

    def tool(self, name: str) -> ToolSpec | None:
        return next((t for t in self.tools if t.name == name), None)

    def tool_names(self) -> list[str]:
        return [t.name for t in self.tools]


def load_manifest(document: dict | str) -> AppManifest:
    if isinstance(document, str):
        try:
            document = json.loads(document)
        except ValueError as exc:
            raise ManifestInvalid("document", str(exc))
    doc = dict(document)
    app_id = doc.get("app_id", "")
    if not isinstance(app_id, str) or not _ID_RE.match(app_id):
        raise ManifestInvalid("app_id", "must be a lowercase token")
    description = doc.get("description", "")
    if not isinstance(description, str) or not description.strip():
        raise ManifestInvalid("description", "must be non-empty")
    root_domain = doc.get("root_domain", "")
    try:
        if etld_plus_one(root_domain) != root_domain:
            raise ManifestInvalid("root_domain", f"{root_domain!r} is not an eTLD+1")
    except InvalidHost as exc:
        raise ManifestInvalid("root_domain", str(exc))

    tools = []
    for t in doc.get("tools", []):
        name = t.get("name", "")
        if not _ID_RE.match(name):
            raise ManifestInvalid("tools", f"tool name {name!r}")
        result_type = t.get("result_type", "string")
        if result_type not in RESULT_TYPES:
            raise ManifestInvalid("tools", f"result_type {result_type!r}")
        params = tuple((str(k), str(v)) for k, v in t.get("params", {}).items())
        tools.append(ToolSpec(name=name, params=params, binding=t.get("binding", ""),
                              result_type=result_type))
    tool_names = {t.name for t in tools}
    if len(tool_names) != len(tools):
        raise ManifestInvalid("tools", "duplicate tool names")

    irreversible = list(doc.get("irreversible_actions", []))
    extra = set(irreversible) - tool_names
    if extra:
        raise ManifestInvalid("irreversible_actions", f"not in tools: {sorted(extra)}")

    descriptors = []
    for f in doc.get("functionalities", []):
        try:
            descriptors.append(
                FunctionalityDescriptor(
                    name=f["name"],
                    request_fields=tuple((str(n), str(t)) for n, t in f["request_fields"]),
                    response_fields=tuple((str(n), str(t)) for n, t in f["response_fields"]),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ManifestInvalid("functionalities", str(exc))

    override = None
    if doc.get("backend_override"):
        override = BackendSpec(**doc["backend_override"])

    return AppManifest(
        app_id=app_id,
        display_name=doc.get("display_name", app_id),
        description=description,
        root_domain=root_domain,
        tools=tools,
        functionality_descriptors=descriptors,
        irreversible_actions=irreversible,
        backend_override=override,
    )


def serialize_manifest(m: AppManifest) -> dict:
    doc: dict = {
        "app_id": m.app_id,
        "display_name": m.display_name,
        "description": m.description,
        "root_domain": m.root_domain,
        "tools": [
            {
                "name": t.name,
                "params": {k: v for k, v in t.params},
                "binding": t.binding,
                "result_type": t.result_type,
            }
            for t in m.tools
        ],
        "functionalities": [
            {
                "name": d.name,
                "request_fields": [[n, t] for n, t in d.request_fields],
                "response_fields": [[n, t] for n, t in d.response_fields],
            }
            for d in m.functionality_descriptors
        ],
        "irreversible_actions": list(m.irreversible_actions),
    }
    if m.backend_override:
        doc["backend_override"] = {
            "kind": m.backend_override.kind,
            "table_id": m.backend_override.table_id,
            "seed": m.backend_override.seed,
        }
    return doc


class ToolHandlerRegistry:
    """Binding key -> in-process handler. Populated by the built-in app suite."""

    def __init__(self):
        self._handlers: dict[str, Callable] = {}

    def register(self, key: str, handler: Callable) -> None:
        self._handlers[key] = handler

    def resolve(self, binding: str) -> Callable:
        if binding.startswith("builtin:"):
            key = binding.split(":", 1)[1]
            if key not in self._handlers:
                raise KeyError(f"no builtin handler {key!r}")
            return self._handlers[key]
        raise KeyError(f"unsupported binding {binding!r} for in-process execution")


HANDLERS = ToolHandlerRegistry()


class FunctionalityBindingRegistry:
    """functionality name -> provider-side executor(payload, runtime) -> payload."""

    def __init__(self):
        self._bindings: dict[str, Callable] = {}

    def register(self, functionality: str, executor: Callable) -> None:
        self._bindings[functionality] = executor

    def resolve(self, functionality: str) -> Callable | None:
        return self._bindings.get(functionality)


FUNC_BINDINGS = FunctionalityBindingRegistry()
