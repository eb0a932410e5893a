"""Registrable-domain computation against a rule-walking oracle."""

import pytest

from hubspoke.errors import InvalidHost
from hubspoke.suffixes import SuffixList, bundled_list, etld_plus_one


def oracle_etld_plus_one(host: str, rules: set[str], exceptions: set[str]) -> str | None:
    """Brute force per the public-suffix algorithm: enumerate every rule,
    collect all that match, exceptions beat everything, else most labels."""
    labels = host.lower().rstrip(".").split(".")

    def rule_matches(rule: str) -> bool:
        rule_labels = rule.split(".")
        if len(rule_labels) > len(labels):
            return False
        for rl, hl in zip(reversed(rule_labels), reversed(labels)):
            if rl != "*" and rl != hl:
                return False
        return True

    matching_exceptions = [r for r in exceptions if rule_matches(r)]
    if matching_exceptions:
        best = max(matching_exceptions, key=lambda r: len(r.split(".")))
        suffix_len = len(best.split(".")) - 1
    else:
        matching = [r for r in rules if rule_matches(r)]
        suffix_len = max((len(r.split(".")) for r in matching), default=1)
    if suffix_len >= len(labels):
        return None
    return ".".join(labels[-(suffix_len + 1):])


HOSTS_50 = [
    "example.com", "www.example.com", "a.b.example.com", "deep.a.b.example.com",
    "api.metrohail.example", "metrohail.example", "evil.example", "x.evil.example",
    "example.co.uk", "www.example.co.uk", "shop.a.example.co.uk", "example.org.uk",
    "www.gov.uk", "a.ac.uk", "b.sch.uk", "plain.uk",
    "example.co.jp", "www.example.co.jp", "a.ne.jp", "b.or.jp",
    "foo.kawasaki.jp", "a.foo.kawasaki.jp", "city.kawasaki.jp", "sub.city.kawasaki.jp",
    "example.com.au", "w.example.net.au", "e.org.au", "x.edu.au",
    "example.com.br", "a.example.net.br", "example.co.in", "b.gen.in",
    "example.co.nz", "a.example.org.nz", "www.ck", "sub.www.ck",
    "other.ck", "a.other.ck", "example.de", "www.example.fr",
    "a.example.nl", "team.github.io", "a.team.github.io", "app.herokuapp.com",
    "bucket.s3.amazonaws.com", "x.bucket.s3.amazonaws.com", "example.io",
    "www.example.dev", "some.example.ai", "x.y.example.me",
]


def test_fixture_is_fifty_hosts():
    assert len(HOSTS_50) == 50


@pytest.mark.parametrize("host", HOSTS_50)
def test_matches_oracle_on_fixture(host):
    snapshot = bundled_list()
    expected = oracle_etld_plus_one(host, snapshot.rules, snapshot.exceptions)
    if expected is None:
        with pytest.raises(InvalidHost):
            etld_plus_one(host)
    else:
        assert etld_plus_one(host) == expected


def test_suffix_list_walk_by_hand():
    # "a.b.co.uk" with co.uk listed: suffix co.uk, registrable b.co.uk
    assert etld_plus_one("a.b.co.uk") == "b.co.uk"
    assert etld_plus_one("example.com") == "example.com"


def test_wildcard_and_exception_rules():
    # *.ck makes foo.ck a suffix, so registrable needs three labels
    assert etld_plus_one("a.other.ck") == "a.other.ck"
    with pytest.raises(InvalidHost):
        etld_plus_one("other.ck")
    # !www.ck carves www.ck back out as registrable
    assert etld_plus_one("www.ck") == "www.ck"
    assert etld_plus_one("sub.www.ck") == "www.ck"


def test_ip_literals_blocked():
    for host in ("127.0.0.1", "10.2.3.4", "[::1]", "2001:db8::1"):
        with pytest.raises(InvalidHost):
            etld_plus_one(host)


def test_bare_suffix_and_malformed_hosts():
    for host in ("com", "co.uk", "", "-bad.example.com", "bad-.example.com",
                 "a..b.com", "x" * 64 + ".com"):
        with pytest.raises(InvalidHost):
            etld_plus_one(host)


def test_unlisted_tld_falls_back_to_star_rule():
    assert etld_plus_one("host.service.unlistedtld") == "service.unlistedtld"


def test_snapshot_version_pinned():
    assert bundled_list().version == "psl-snapshot-2026-01"


def test_custom_list_separate_from_bundled():
    custom = SuffixList(["zz", "*.zz", "!ok.zz"], version="t1")
    assert custom.etld_plus_one("a.ok.zz") == "ok.zz"
    assert custom.etld_plus_one("a.b.zz") == "a.b.zz"
