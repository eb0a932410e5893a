"""Registrable-domain (eTLD+1) computation over a bundled suffix snapshot.

Matching follows the public-suffix algorithm: the prevailing rule is the
matching rule with the most labels, exception rules beat wildcards, and an
unlisted TLD falls back to the implicit "*" rule. Hosts that cannot carry a
registrable domain (IP literals, bare suffixes, malformed labels) raise
InvalidHost — callers treat that as a block, never a pass.
"""

from __future__ import annotations

import ipaddress
import re
from importlib import resources

from .errors import InvalidHost

_LABEL_RE = re.compile(r"^(?!-)[a-z0-9-]{1,63}(?<!-)$")


class SuffixList:
    def __init__(self, rules: list[str], version: str):
        self.version = version
        self.rules: set[str] = set()
        self.exceptions: set[str] = set()
        for rule in rules:
            if rule.startswith("!"):
                self.exceptions.add(rule[1:])
            else:
                self.rules.add(rule)

    @classmethod
    def bundled(cls) -> "SuffixList":
        text = (
            resources.files("hubspoke.data")
            .joinpath("public_suffix_snapshot.dat")
            .read_text()
        )
        version = "unversioned"
        rules = []
        for line in text.splitlines():
            line = line.strip()
            if line.startswith("// version:"):
                version = line.split(":", 1)[1].strip()
            if not line or line.startswith("//"):
                continue
            rules.append(line.lower())
        return cls(rules, version)

    def _prevailing(self, labels: list[str]) -> tuple[int, bool]:
        """Return (label count of prevailing rule, is_exception).

        An exception rule always prevails; otherwise the matching rule with
        the most labels wins, defaulting to the implicit "*" rule.
        """
        best_normal = 1  # implicit "*" rule
        best_exception = 0
        for take in range(1, len(labels) + 1):
            tail = labels[-take:]
            candidate = ".".join(tail)
            wildcard = ".".join(["*"] + tail[1:])
            if candidate in self.exceptions:
                best_exception = max(best_exception, take)
            if candidate in self.rules or (take >= 2 and wildcard in self.rules):
                best_normal = max(best_normal, take)
        if best_exception:
            return best_exception, True
        return best_normal, False

    def public_suffix(self, host: str) -> str:
        labels = _host_labels(host)
        count, is_exception = self._prevailing(labels)
        if is_exception:
            count -= 1  # exception rule: drop its leftmost label
        if count >= len(labels):
            raise InvalidHost(f"{host!r} is itself a public suffix")
        return ".".join(labels[-count:])

    def etld_plus_one(self, host: str) -> str:
        labels = _host_labels(host)
        suffix = self.public_suffix(host)
        take = suffix.count(".") + 2
        return ".".join(labels[-take:])


def _host_labels(host: str) -> list[str]:
    if not host or len(host) > 253:
        raise InvalidHost(repr(host))
    host = host.rstrip(".").lower()
    try:
        ipaddress.ip_address(host.strip("[]"))
    except ValueError:
        pass
    else:
        raise InvalidHost(f"IP literal {host!r} has no registrable domain")
    labels = host.split(".")
    if len(labels) < 2:
        raise InvalidHost(f"{host!r} has no registrable domain")
    for label in labels:
        if not _LABEL_RE.match(label):
            raise InvalidHost(f"label {label!r} in {host!r}")
    return labels


_BUNDLED: SuffixList | None = None


def bundled_list() -> SuffixList:
    global _BUNDLED
    if _BUNDLED is None:
        _BUNDLED = SuffixList.bundled()
    return _BUNDLED


def etld_plus_one(host: str) -> str:
    return bundled_list().etld_plus_one(host)
