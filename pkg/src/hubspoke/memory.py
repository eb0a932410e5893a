"""Long-term and working memory for one principal (the hub or one spoke).

Store layout (file-backed, single-owner):

    <root>/log/journal.jsonl        append-only interaction records
    <root>/entities/<entity>__<attribution>.json
    <root>/summaries/<scope>.json

Summaries and entity pairs are produced through the principal's own backend
instance; working memory carries entity *names* only — values are fetched on
demand. Private records never enter a non-private assembly.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from .backend import Backend, ChatTurn, estimate_tokens
from .errors import ContextWindowExceeded, StoreUnavailable

SUMMARIZE_PREFIX = "MEMORY SUMMARIZE:"
EXTRACT_PREFIX = "MEMORY EXTRACT:"


@dataclass(frozen=True)
class InteractionRecord:
    seq: int
    role: str  # user | hub | spoke(<app_id>)
    text: str
    attribution: str  # app_id | system
    private: bool = False


@dataclass
class EntityPair:
    entity: str
    value: str
    attribution: str
    updated_seq: int


@dataclass
class SummarizedKnowledge:
    scope: str  # "global" | app_id
    text: str
    covers_up_to_seq: int


@dataclass
class WorkingMemory:
    recent: list[InteractionRecord] = field(default_factory=list)
    summaries: list[SummarizedKnowledge] = field(default_factory=list)
    entities_available: list[str] = field(default_factory=list)

    def render(self) -> str:
        parts = []
        for s in self.summaries:
            parts.append(f"(summary:{s.scope}) {s.text}")
        for r in self.recent:
            parts.append(f"({r.role}) {r.text}")
        if self.entities_available:
            parts.append("known entities: " + ", ".join(self.entities_available))
        return "\n".join(parts)


def canonical_entity(name: str) -> str:
    return re.sub(r"[^a-z0-9]+", "_", name.strip().lower()).strip("_")


class MemoryStore:
    def __init__(self, root: str | Path, principal: str):
        self.root = Path(root)
        self.principal = principal
        try:
            (self.root / "log").mkdir(parents=True, exist_ok=True)
            (self.root / "entities").mkdir(exist_ok=True)
            (self.root / "summaries").mkdir(exist_ok=True)
        except OSError as exc:
            raise StoreUnavailable(str(exc))
        self._journal = self.root / "log" / "journal.jsonl"
        self._seq = sum(1 for _ in self._journal.open()) if self._journal.exists() else 0

    # -- interaction log ----------------------------------------------------

    def append(self, role: str, text: str, attribution: str = "system",
               private: bool = False) -> int:
        self._seq += 1
        rec = InteractionRecord(self._seq, role, text, attribution, private)
        try:
            with self._journal.open("a") as fh:
                fh.write(json.dumps(rec.__dict__, sort_keys=True) + "\n")
                fh.flush()
        except OSError as exc:
            raise StoreUnavailable(str(exc))
        return rec.seq

    @property
    def max_seq(self) -> int:
        return self._seq

    def records(self, attribution: str | None = None,
                include_private: bool = False) -> list[InteractionRecord]:
        out = []
        if not self._journal.exists():
            return out
        for line in self._journal.open():
            rec = InteractionRecord(**json.loads(line))
            if rec.private and not include_private:
                continue
            if attribution is not None and rec.attribution != attribution:
                continue
            out.append(rec)
        return out

    # -- entity pairs -------------------------------------------------------

    def _entity_path(self, entity: str, attribution: str) -> Path:
        return self.root / "entities" / f"{entity}__{attribution}.json"

    def upsert_entity(self, entity: str, value: str, attribution: str) -> EntityPair:
        entity = canonical_entity(entity)
        pair = EntityPair(entity, value, attribution, self._seq)
        self._entity_path(entity, attribution).write_text(
            json.dumps(pair.__dict__, sort_keys=True)
        )
        return pair

    def entity_pairs(self, attribution: str | None = None) -> list[EntityPair]:
        out = []
        for path in sorted((self.root / "entities").glob("*.json")):
            pair = EntityPair(**json.loads(path.read_text()))
            if attribution is None or pair.attribution == attribution:
                out.append(pair)
        return out

    def lookup_entity(self, entity: str, attribution: str | None = None) -> EntityPair | None:
        entity = canonical_entity(entity)
        matches = [p for p in self.entity_pairs(attribution) if p.entity == entity]
        if not matches:
            return None
        return max(matches, key=lambda p: p.updated_seq)

    def cross_spoke_lookup(self, entity: str, requesting_app: str) -> EntityPair | None:
        """Hub-side: find the pair for consent presentation.

        Never auto-shares: the caller must obtain consent unless the pair's
        attribution equals the requesting app.
        """
        own = self.lookup_entity(entity, attribution=requesting_app)
        if own is not None:
            return own
        return self.lookup_entity(entity)

    # -- summaries ----------------------------------------------------------

    def summarize(self, scope: str, backend: Backend) -> SummarizedKnowledge:
        """Chunked iterative summarization over all non-private records in scope."""
        if scope == "global":
            recs = self.records()
        else:
            recs = self.records(attribution=scope)
        running = ""
        window = backend.spec.context_window_tokens
        chunk: list[InteractionRecord] = []

        def flush(chunk: list[InteractionRecord], running: str) -> str:
            if not chunk:
                return running
            lines = "\n".join(f"- {r.text}" for r in chunk)
            prompt = f"{SUMMARIZE_PREFIX}\nprior: {running}\n{lines}"
            turn = backend.complete(
                [ChatTurn("user", prompt)], phase="memory"
            )
            return turn.content

        for rec in recs:
            if estimate_tokens(rec.text) + 64 > window:
                raise ContextWindowExceeded(f"record seq={rec.seq} alone exceeds the window")
            pending = "\n".join(f"- {r.text}" for r in chunk + [rec])
            if estimate_tokens(pending) + estimate_tokens(running) + 64 > window:
                running = flush(chunk, running)
                chunk = [rec]
            else:
                chunk.append(rec)
        running = flush(chunk, running)
        summary = SummarizedKnowledge(scope, running, self._seq)
        (self.root / "summaries" / f"{scope}.json").write_text(
            json.dumps(summary.__dict__, sort_keys=True)
        )
        return summary

    def summaries(self, scope: str | None = None) -> list[SummarizedKnowledge]:
        out = []
        for path in sorted((self.root / "summaries").glob("*.json")):
            s = SummarizedKnowledge(**json.loads(path.read_text()))
            if scope is None or s.scope == scope:
                out.append(s)
        return out

    # -- entity extraction ----------------------------------------------------

    def extract_entities(self, records: list[InteractionRecord], backend: Backend,
                         active_app: str) -> list[EntityPair]:
        """LLM-driven entity extraction; pairs attributed to the active app."""
        if not records:
            return []
        lines = "\n".join(f"- {r.text}" for r in records)
        turn = backend.complete(
            [ChatTurn("user", f"{EXTRACT_PREFIX}\n{lines}")], phase="memory"
        )
        pairs = []
        try:
            doc = json.loads(turn.content)
        except ValueError:
            return []
        for item in doc:
            entity, value = item[0], item[1]
            pairs.append(self.upsert_entity(entity, str(value), active_app))
        return pairs

    # -- working memory -------------------------------------------------------

    def build_working_memory(self, query: str, k: int, token_budget: int,
                             scope: str | None = None, private: bool = False,
                             on_truncate=None) -> WorkingMemory:
        """Assemble the bounded context for a backend call.

        Private mode yields an empty assembly. Oldest summaries are truncated
        first when the serialized form exceeds the budget; each truncation is
        reported through on_truncate.
        """
        if private:
            return WorkingMemory()
        recs = self.records(attribution=scope) if scope else self.records()
        recent = recs[-k:] if k > 0 else []
        sums = self.summaries(scope=scope) if scope else self.summaries()
        names = sorted({p.entity for p in self.entity_pairs()})
        wm = WorkingMemory(recent=recent, summaries=list(sums), entities_available=names)
        while wm.summaries and estimate_tokens(wm.render()) > token_budget:
            dropped = wm.summaries.pop(0)
            if on_truncate:
                on_truncate(dropped.scope)
        while wm.recent and estimate_tokens(wm.render()) > token_budget:
            wm.recent.pop(0)
        return wm

    # -- inspection -----------------------------------------------------------

    def export_text(self) -> str:
        lines = [f"# memory export: {self.principal}"]
        lines.append("## log")
        for r in self.records(include_private=True):
            flag = " [private]" if r.private else ""
            lines.append(f"{r.seq:>5} {r.role} ({r.attribution}){flag}: {r.text}")
        lines.append("## entities")
        for p in self.entity_pairs():
            lines.append(f"{p.entity} = {p.value}  [{p.attribution} @ {p.updated_seq}]")
        lines.append("## summaries")
        for s in self.summaries():
            lines.append(f"{s.scope} (up to {s.covers_up_to_seq}): {s.text}")
        return "\n".join(lines)
