"""Runtime configuration and the deterministic time/randomness sources.

Config file keys (JSON, all optional — defaults below):

  backend.kind            "scripted" | "remote"
  backend.table_id        rule table for scripted backends
  backend.seed            seed for scripted tie-breaking and sid minting
  backend.endpoint        chat-completion URL (remote)
  backend.model           model name (remote)
  backend.key_env         name of the environment variable holding the API key
  backend.context_window_tokens
  timeouts.spoke_reply_s  hub<->spoke request-reply timeout (default 120)
  timeouts.prompt_s       permission prompt timeout; expiry denies (default 60)
  memory.recent_window    k most recent records in working memory (default 10)
  memory.summarize_every  summarization cadence in appends (default 20)
  memory.token_budget     working-memory serialization budget (default 2048)
  isc.string_limit        bounded_string length limit (default 256)
  sandbox.cpu_seconds     RLIMIT_CPU for spokes (default 60)
  sandbox.max_virtual_memory_bytes   RLIMIT_AS (default 512 MiB)
  sandbox.max_created_file_bytes     RLIMIT_FSIZE (default 16 MiB)
  sandbox.enable_seccomp  install the system-interface deny list (default true)
  deterministic           virtual clock + seeded RNG (default true)
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path


@dataclass
class BackendConfig:
    kind: str = "scripted"
    table_id: str = "builtin"
    seed: int = 0
    endpoint: str = ""
    model: str = ""
    key_env: str = "HUBSPOKE_API_KEY"
    context_window_tokens: int = 8192


@dataclass
class RuntimeConfig:
    backend: BackendConfig = field(default_factory=BackendConfig)
    spoke_reply_timeout_s: float = 120.0
    prompt_timeout_s: float = 60.0
    recent_window: int = 10
    summarize_every: int = 20
    token_budget: int = 2048
    string_limit: int = 256
    cpu_seconds: int = 60
    max_virtual_memory_bytes: int = 512 * 1024 * 1024
    max_created_file_bytes: int = 16 * 1024 * 1024
    enable_seccomp: bool = True
    deterministic: bool = True

    @classmethod
    def from_file(cls, path: str | Path) -> "RuntimeConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    @classmethod
    def from_dict(cls, doc: dict) -> "RuntimeConfig":
        cfg = cls()
        b = doc.get("backend", {})
        cfg.backend = BackendConfig(
            kind=b.get("kind", cfg.backend.kind),
            table_id=b.get("table_id", cfg.backend.table_id),
            seed=int(b.get("seed", cfg.backend.seed)),
            endpoint=b.get("endpoint", cfg.backend.endpoint),
            model=b.get("model", cfg.backend.model),
            key_env=b.get("key_env", cfg.backend.key_env),
            context_window_tokens=int(
                b.get("context_window_tokens", cfg.backend.context_window_tokens)
            ),
        )
        t = doc.get("timeouts", {})
        cfg.spoke_reply_timeout_s = float(t.get("spoke_reply_s", cfg.spoke_reply_timeout_s))
        cfg.prompt_timeout_s = float(t.get("prompt_s", cfg.prompt_timeout_s))
        m = doc.get("memory", {})
        cfg.recent_window = int(m.get("recent_window", cfg.recent_window))
        cfg.summarize_every = int(m.get("summarize_every", cfg.summarize_every))
        cfg.token_budget = int(m.get("token_budget", cfg.token_budget))
        i = doc.get("isc", {})
        cfg.string_limit = int(i.get("string_limit", cfg.string_limit))
        s = doc.get("sandbox", {})
        cfg.cpu_seconds = int(s.get("cpu_seconds", cfg.cpu_seconds))
        cfg.max_virtual_memory_bytes = int(
            s.get("max_virtual_memory_bytes", cfg.max_virtual_memory_bytes)
        )
        cfg.max_created_file_bytes = int(
            s.get("max_created_file_bytes", cfg.max_created_file_bytes)
        )
        cfg.enable_seccomp = bool(s.get("enable_seccomp", cfg.enable_seccomp))
        cfg.deterministic = bool(doc.get("deterministic", cfg.deterministic))
        return cfg


class Clock:
    """Time source for audit records, grants, and the timing report.

    Deterministic mode uses a logical counter advanced by explicit charges so
    that two runs of the same scenario serialize byte-identically; wall mode
    reads the real monotonic clock.
    """

    def __init__(self, deterministic: bool = True):
        self.deterministic = deterministic
        self._virtual = 0.0

    def now(self) -> float:
        if self.deterministic:
            return round(self._virtual, 6)
        import time

        return time.monotonic()

    def charge(self, seconds: float) -> None:
        """Advance virtual time (no-op on the wall clock, which flows itself)."""
        if self.deterministic:
            self._virtual += seconds


class SeededRng:
    """All runtime randomness (sid minting, tie-breaks) flows through here."""

    def __init__(self, seed: int = 0):
        self._rng = random.Random(seed)

    def sid_hex(self) -> str:
        return "%032x" % self._rng.getrandbits(128)

    def choice_index(self, n: int) -> int:
        return self._rng.randrange(n) if n > 1 else 0
