"""Inter-spoke collaboration protocol: catalog, wire codec, validation, routing.

Wire format (big-endian, bit-exact):

    record        = u32 body_length || body
    body          = tag (1 byte) || field*
    tag           = 0 Probe | 1 FormatResponse | 2 Request | 3 Response
    field         = u16 byte_length || UTF-8 bytes

Field order per variant is normative:

    Probe          sid, functionality
    FormatResponse sid, request_format, response_format
    Request        sid, functionality, payload
    Response       sid, payload

Formats and payloads are canonical JSON (formats: ordered [name, type]
pairs; payloads: objects whose key order must equal the descriptor's).

Validation verdicts are values, not exceptions, and are pure: the reason
names the first failing schema field, or one of the fixed codes
(sid, functionality, unexpected_field, payload, tag, length, truncated,
encoding) — never any payload text, so a malicious peer cannot tunnel
content through error strings.
"""

from __future__ import annotations

import datetime
import json
import re
import struct
from dataclasses import dataclass, field

from .errors import NoProvider, SelfOnly

FIELD_TYPES = ("date", "integer", "url", "bounded_string")

DEFAULT_STRING_LIMIT = 256

_SID_RE = re.compile(r"^[0-9a-f]{32}$")
_NAME_RE = re.compile(r"^[a-z][a-z0-9_]*$")
_DATE_RE = re.compile(r"^\d{4}-\d{2}-\d{2}$")
_INT64_MIN, _INT64_MAX = -(2**63), 2**63 - 1


@dataclass(frozen=True)
class FunctionalityDescriptor:
    name: str
    request_fields: tuple[tuple[str, str], ...]
    response_fields: tuple[tuple[str, str], ...]

    def __post_init__(self):
        if not _NAME_RE.match(self.name):
            raise ValueError(f"functionality name {self.name!r} is not a snake-case token")
        for fname, ftype in self.request_fields + self.response_fields:
            if ftype not in FIELD_TYPES:
                raise ValueError(f"field {fname!r} has unknown type {ftype!r}")


@dataclass
class Probe:
    sid: str
    functionality: str


@dataclass
class FormatResponse:
    sid: str
    request_format: str
    response_format: str


@dataclass
class Request:
    sid: str
    functionality: str
    payload: dict


@dataclass
class Response:
    sid: str
    payload: dict


IscEnvelope = Probe | FormatResponse | Request | Response

_TAGS = {Probe: 0, FormatResponse: 1, Request: 2, Response: 3}


@dataclass
class Verdict:
    ok: bool
    reason: str = ""

    def __bool__(self) -> bool:
        return self.ok


OK = Verdict(True)


def malformed(reason: str) -> Verdict:
    return Verdict(False, reason)


def format_text(fields: tuple[tuple[str, str], ...]) -> str:
    """Canonical serialization of an ordered field schema."""
    return json.dumps([[n, t] for n, t in fields], separators=(",", ":"))


def parse_format_text(text: str) -> tuple[tuple[str, str], ...] | None:
    try:
        doc = json.loads(text)
        fields = tuple((str(n), str(t)) for n, t in doc)
    except (ValueError, TypeError):
        return None
    for _, t in fields:
        if t not in FIELD_TYPES:
            return None
    return fields


def payload_text(payload: dict) -> str:
    """Canonical payload serialization preserving key order."""
    return json.dumps(payload, separators=(",", ":"))


def _fields_of(env: IscEnvelope) -> list[str]:
    if isinstance(env, Probe):
        return [env.sid, env.functionality]
    if isinstance(env, FormatResponse):
        return [env.sid, env.request_format, env.response_format]
    if isinstance(env, Request):
        return [env.sid, env.functionality, payload_text(env.payload)]
    return [env.sid, payload_text(env.payload)]


def encode_envelope(env: IscEnvelope) -> bytes:
    body = bytes([_TAGS[type(env)]])
    for f in _fields_of(env):
        raw = f.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise ValueError("field exceeds u16 length prefix")
        body += struct.pack(">H", len(raw)) + raw
    return struct.pack(">I", len(body)) + body


def decode_envelope(record: bytes) -> IscEnvelope | Verdict:
    """Strict decode; any framing deviation is a Malformed verdict."""
    if len(record) < 5:
        return malformed("length")
    (body_len,) = struct.unpack(">I", record[:4])
    body = record[4:]
    if len(body) != body_len or body_len < 1:
        return malformed("length")
    tag = body[0]
    fields: list[str] = []
    pos = 1
    while pos < len(body):
        if pos + 2 > len(body):
            return malformed("truncated")
        (flen,) = struct.unpack(">H", body[pos:pos + 2])
        pos += 2
        if pos + flen > len(body):
            return malformed("truncated")
        try:
            fields.append(body[pos:pos + flen].decode("utf-8"))
        except UnicodeDecodeError:
            return malformed("encoding")
        pos += flen
    arities = {0: 2, 1: 3, 2: 3, 3: 2}
    if tag not in arities:
        return malformed("tag")
    if len(fields) != arities[tag]:
        return malformed("length")
    if tag == 0:
        return Probe(fields[0], fields[1])
    if tag == 1:
        return FormatResponse(fields[0], fields[1], fields[2])
    if tag == 2:
        payload = _parse_payload(fields[2])
        if payload is None:
            return malformed("payload")
        return Request(fields[0], fields[1], payload)
    payload = _parse_payload(fields[1])
    if payload is None:
        return malformed("payload")
    return Response(fields[0], payload)


def _parse_payload(text: str) -> dict | None:
    try:
        doc = json.loads(text)
    except ValueError:
        return None
    return doc if isinstance(doc, dict) else None


def validate_value(ftype: str, value: object, string_limit: int) -> bool:
    if ftype == "date":
        if not isinstance(value, str) or not _DATE_RE.match(value):
            return False
        try:
            datetime.date.fromisoformat(value)
        except ValueError:
            return False
        return True
    if ftype == "integer":
        return (
            isinstance(value, int)
            and not isinstance(value, bool)
            and _INT64_MIN <= value <= _INT64_MAX
        )
    if ftype == "url":
        if not isinstance(value, str):
            return False
        from urllib.parse import urlparse

        try:
            parts = urlparse(value)
        except ValueError:
            return False
        return parts.scheme in ("http", "https") and bool(parts.netloc) and " " not in value
    if ftype == "bounded_string":
        return isinstance(value, str) and len(value) <= string_limit
    return False


def _validate_payload(payload: dict, schema: tuple[tuple[str, str], ...],
                      string_limit: int) -> Verdict:
    keys = list(payload.keys())
    names = [n for n, _ in schema]
    for i, (name, ftype) in enumerate(schema):
        if i >= len(keys):
            return malformed(name)  # missing
        if keys[i] != name:
            # out of order, or an unknown key occupying this position
            return malformed(name if keys[i] not in names else keys[i])
        if not validate_value(ftype, payload[name], string_limit):
            return malformed(name)
    if len(keys) > len(names):
        return malformed("unexpected_field")
    return OK


def validate_message(env: IscEnvelope, descriptor: FunctionalityDescriptor,
                     string_limit: int = DEFAULT_STRING_LIMIT) -> Verdict:
    """Pure verdict: same input, same answer. Reason = first failing field."""
    if not _SID_RE.match(env.sid):
        return malformed("sid")
    if isinstance(env, (Probe, Request)):
        if env.functionality != descriptor.name:
            return malformed("functionality")
    if isinstance(env, FormatResponse):
        req = parse_format_text(env.request_format)
        resp = parse_format_text(env.response_format)
        if req != descriptor.request_fields:
            return malformed("request_format")
        if resp != descriptor.response_fields:
            return malformed("response_format")
        return OK
    if isinstance(env, Request):
        return _validate_payload(env.payload, descriptor.request_fields, string_limit)
    if isinstance(env, Response):
        return _validate_payload(env.payload, descriptor.response_fields, string_limit)
    return OK


class FunctionalityCatalog:
    """All store functionality, installed or not.

    The broadcast list never reveals schemas, providers, or installation
    status; the hub alone resolves providers.
    """

    def __init__(self):
        self._descriptors: dict[str, FunctionalityDescriptor] = {}
        self._providers: dict[str, list[str]] = {}
        self._installed: set[str] = set()

    def add(self, descriptor: FunctionalityDescriptor, provider_app: str,
            installed: bool) -> None:
        existing = self._descriptors.get(descriptor.name)
        if existing is not None and existing != descriptor:
            raise ValueError(f"functionality {descriptor.name!r} already cataloged with a different schema")
        self._descriptors[descriptor.name] = descriptor
        self._providers.setdefault(descriptor.name, [])
        if provider_app not in self._providers[descriptor.name]:
            self._providers[descriptor.name].append(provider_app)
        if installed:
            self._installed.add(provider_app)

    def mark_installed(self, app_id: str) -> None:
        self._installed.add(app_id)

    def list_functionalities(self) -> list[str]:
        return sorted(self._descriptors)

    def descriptor(self, name: str) -> FunctionalityDescriptor | None:
        return self._descriptors.get(name)

    def providers(self, name: str) -> list[str]:
        return list(self._providers.get(name, []))

    def is_installed(self, app_id: str) -> bool:
        return app_id in self._installed


@dataclass
class ProbeResult:
    counterparty_sid: str
    descriptor: FunctionalityDescriptor
    format_response: FormatResponse


class IscRouter:
    """Probe table and sid bookkeeping. Owned and mutated by the hub loop only."""

    def __init__(self, catalog: FunctionalityCatalog, string_limit: int = DEFAULT_STRING_LIMIT):
        self.catalog = catalog
        self.string_limit = string_limit
        self._probes: dict[tuple[str, str], ProbeResult] = {}
        self._sid_app: dict[str, str] = {}

    def bind_sid(self, sid: str, app_id: str) -> None:
        self._sid_app[sid] = app_id

    def app_of(self, sid: str) -> str | None:
        return self._sid_app.get(sid)

    def probe(self, requester_sid: str, functionality: str,
              choose_provider, ensure_spoke) -> ProbeResult:
        """Resolve a provider and return its formats under a counterparty sid.

        choose_provider(candidates, needs_install) -> app_id is supplied by
        the hub and may consult the user; ensure_spoke(app_id) -> sid spawns
        or attaches the provider spoke. Idempotent per (requester,
        functionality) within a session.
        """
        key = (requester_sid, functionality)
        if key in self._probes:
            return self._probes[key]
        descriptor = self.catalog.descriptor(functionality)
        if descriptor is None:
            raise NoProvider(functionality)
        requester_app = self._sid_app.get(requester_sid)
        candidates = [a for a in self.catalog.providers(functionality) if a != requester_app]
        if not candidates:
            if self.catalog.providers(functionality):
                raise SelfOnly(functionality)
            raise NoProvider(functionality)
        needs_install = [a for a in candidates if not self.catalog.is_installed(a)]
        provider = choose_provider(candidates, needs_install)
        provider_sid = ensure_spoke(provider)
        self._sid_app[provider_sid] = provider
        fr = FormatResponse(
            sid=provider_sid,
            request_format=format_text(descriptor.request_fields),
            response_format=format_text(descriptor.response_fields),
        )
        result = ProbeResult(provider_sid, descriptor, fr)
        self._probes[key] = result
        return result

    def probed(self, requester_sid: str, functionality: str) -> ProbeResult | None:
        return self._probes.get((requester_sid, functionality))
