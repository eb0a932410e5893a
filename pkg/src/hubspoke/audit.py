"""Structured audit log: one JSONL record per hub state transition.

Also carries sandbox launch reports, egress decisions, and memory
truncation notices so a run can be reconstructed offline.
"""

from __future__ import annotations

import json
from pathlib import Path

from .config import Clock


class AuditLog:
    def __init__(self, path: str | Path | None, clock: Clock):
        self._path = Path(path) if path else None
        self._clock = clock
        self._seq = 0
        self.records: list[dict] = []
        if self._path:
            self._path.parent.mkdir(parents=True, exist_ok=True)
            self._path.write_text("")

    def emit(self, kind: str, **detail) -> dict:
        self._seq += 1
        rec = {"seq": self._seq, "t": self._clock.now(), "kind": kind, **detail}
        self.records.append(rec)
        if self._path:
            with self._path.open("a") as fh:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
        return rec

    def transition(self, state_from: str, state_to: str, **detail) -> dict:
        return self.emit("transition", state_from=state_from, state_to=state_to, **detail)

    def of_kind(self, kind: str) -> list[dict]:
        return [r for r in self.records if r["kind"] == kind]
