"""Invariant suites behind ``fedsim check``.

Each suite returns one :class:`PropertyResult` per property; a suite passes
when every property does. Randomized properties use a fixed seed.
"""

from __future__ import annotations

import dataclasses
import itertools
import json
import random
from dataclasses import dataclass

from .engine import accept_credential, authorize, release_violations
from .errors import DepthExhaustedError, FedsimError
from .idp import AuthnRequest, authenticate_web, issue_certificate
from .integrity import sign, sign_proxy_cert
from .model import AttributeStatement, CompositeIdentity, LoA, ScopedId, Tech, not_after_of
from .proxy import (
    REGISTRY_HEADER,
    IdRegistry,
    aggregate,
    derive_unique_id,
    harmonize,
    issue_downstream,
    unique_id_digest,
)
from .reference import reference_topology
from .scenario import bundled_scenarios, load_scenario_file, run_scenario
from .topology import AuthzPolicy, Rule, trusts
from .translation import create_proxy_cert, translate, validate_chain
from .world import World

EPOCH = 1_000_000


@dataclass(frozen=True)
class PropertyResult:
    name: str
    passed: bool
    detail: str = ""

    def __str__(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}" + (f": {self.detail}" if self.detail else "")


def _prop(name: str, failures: list[str], total: int | None = None) -> PropertyResult:
    if failures:
        return PropertyResult(name, False, f"{len(failures)} violation(s), first: {failures[0]}")
    return PropertyResult(name, True, f"{total} cases" if total is not None else "")


def _reference_world() -> World:
    return World.create(reference_topology(), seed=0, clock=EPOCH)


# -- trust -----------------------------------------------------------------------

def suite_trust() -> list[PropertyResult]:
    t = reference_topology()
    ids = sorted(t.entities)
    internal, reflexive = [], []
    for v, i in itertools.product(ids, ids):
        ok = trusts(t, v, i)
        behind = t.entities[v].internal_behind
        if behind is not None and ok != (i == behind):
            internal.append(f"{v} -> {i}")
        if v == i and ok:
            reflexive.append(v)

    world = _reference_world()
    sps = [e.id for e in t.entities.values() if e.internal_behind]
    rejected, accepted = [], []
    for sp in sps:
        proxy = t.entities[sp].internal_behind
        now = world.clock
        upstream = authenticate_web(world, "idp:ref", "alice", AuthnRequest(proxy, proxy), now)
        # A home IdP would not issue to an SP it has no metadata for; sign one anyway.
        direct = sign(t.anchors, dataclasses.replace(upstream, audience=sp, integrity=None))
        for cred in (upstream, direct):
            if accept_credential(world, sp, cred, now):
                rejected.append(f"{sp} accepted {cred.issuer} -> {cred.audience}")
        cid = aggregate(world, proxy, list(upstream.attributes), t.aggregators[proxy].aas,
                        (upstream.issuer, upstream.subject))
        for tech in sorted(t.entities[sp].protocols, key=lambda x: x.value):
            out = issue_downstream(world, proxy, sp, cid, tech, world.clock, upstream_tech=Tech.SAML)
            if not accept_credential(world, sp, out, world.clock):
                accepted.append(f"{sp} refused proxy {tech.value}")
    return [
        _prop("internal-sp-trusts-only-proxy", internal, len(ids) ** 2),
        _prop("no-self-trust", reflexive, len(ids)),
        _prop("home-credentials-rejected-by-internal-sps", rejected, 2 * len(sps)),
        _prop("proxy-credentials-accepted", accepted),
    ]


# -- identifiers -------------------------------------------------------------------

def snapshot_properties(text: str) -> list[PropertyResult]:
    """Check a registry snapshot without trusting its import path."""
    try:
        doc = json.loads(text)
    except ValueError as exc:
        return [PropertyResult("snapshot-parses", False, str(exc))]
    if not isinstance(doc, dict) or doc.get("format") != REGISTRY_HEADER:
        return [PropertyResult("snapshot-parses", False, "missing registry header")]
    rows = [tuple(r) for r in doc.get("bindings", [])]
    fmt, digest, owner_of, bound = [], [], {}, {}
    rebind, shared = [], []
    for issuer, subject, rendered in rows:
        try:
            sid = ScopedId.parse(rendered)
        except ValueError as exc:
            fmt.append(str(exc))
            continue
        if sid.local_part != unique_id_digest(issuer, subject):
            digest.append(f"{issuer}|{subject}")
        key = (issuer, subject)
        if key in bound and bound[key] != sid:
            rebind.append(f"{issuer}|{subject} bound twice")
        bound.setdefault(key, sid)
        if sid in owner_of and owner_of[sid] != key:
            shared.append(f"{sid} bound to {owner_of[sid][0]}|{owner_of[sid][1]} and {issuer}|{subject}")
        owner_of.setdefault(sid, key)
    for issuer, subject, rendered in doc.get("aliases", []):
        try:
            if ScopedId.parse(rendered) not in owner_of:
                shared.append(f"alias {issuer}|{subject} points at unbound {rendered}")
        except ValueError as exc:
            fmt.append(str(exc))
    return [
        PropertyResult("snapshot-parses", True),
        _prop("scoped-id-format", fmt, len(rows)),
        _prop("digest-consistency", digest, len(rows)),
        _prop("non-reassignment", rebind + shared, len(rows)),
    ]


def suite_ids(snapshot: str | None = None, n: int = 2000) -> list[PropertyResult]:
    if snapshot is not None:
        return snapshot_properties(snapshot)
    rng = random.Random(7)
    reg = IdRegistry()
    determinism, separation = [], []
    for k in range(n):
        issuer = f"idp:{rng.randrange(50)}.example"
        subject = f"user-{k}-{rng.randrange(10 ** 6)}"
        first = derive_unique_id(reg, issuer, subject, "scope.example")
        if derive_unique_id(reg, issuer, subject, "scope.example") != first:
            determinism.append(f"{issuer}|{subject}")
        other = derive_unique_id(reg, issuer + "-other", subject, "scope.example")
        if other == first:
            separation.append(subject)
    results = [_prop("determinism", determinism, n), _prop("issuer-separation", separation, n)]
    return results + snapshot_properties(reg.export_snapshot())[1:]


# -- translation -----------------------------------------------------------------

def suite_translation(n: int = 50) -> list[PropertyResult]:
    t = reference_topology()
    world = _reference_world()
    rng = random.Random(11)
    subject_bad, lifetime_bad, loa_bad, round_bad = [], [], [], []
    for k in range(n):
        world.clock += rng.randrange(1, 50)
        now = world.clock
        assertion = authenticate_web(world, "idp:ref", "alice", AuthnRequest("proxy:ref", "proxy:ref"), now)
        cid = aggregate(world, "proxy:ref", list(assertion.attributes), t.aggregators["proxy:ref"].aas,
                        (assertion.issuer, assertion.subject))
        staged = issue_downstream(world, "proxy:ref", "sp:ref-internal", cid, Tech.SAML, now)
        later = now + rng.randrange(0, 200)
        try:
            out = translate(world, "tts:ref", staged, Tech.X509, later, audience="sp:ref-internal")
        except FedsimError as exc:
            subject_bad.append(f"translate failed: {exc}")
            continue
        if out.subject != staged.subject:
            subject_bad.append(out.subject)
        if not_after_of(out) > not_after_of(staged):
            lifetime_bad.append(f"{not_after_of(out)} > {not_after_of(staged)}")
        before = {(s.name, s.value): s.loa for s in staged.attributes}
        for s in out.leaf.attr_extension:
            if s.loa > before.get((s.name, s.value), LoA.LOW):
                loa_bad.append(f"{s.name}={s.value}")
        back = harmonize({}, out.leaf.attr_extension)
        if sorted((s.name, s.value, s.issuer) for s in back) != sorted(
                (s.name, s.value, s.issuer) for s in staged.attributes):
            round_bad.append(f"case {k}")
    return [
        _prop("subject-preservation", subject_bad, n),
        _prop("lifetime-monotonicity", lifetime_bad, n),
        _prop("loa-monotonicity", loa_bad, n),
        _prop("statement-preservation", round_bad, n),
    ]


# -- delegation --------------------------------------------------------------------

def suite_delegation(n: int = 100) -> list[PropertyResult]:
    t = reference_topology()
    world = _reference_world()
    rng = random.Random(13)
    valid_bad, depth_bad, exhaust_bad, nest_bad = [], [], [], []
    for _ in range(n):
        now = world.clock + rng.randrange(0, 1000)
        chain = issue_certificate(world, "ca:ref", "alice", t.lifetimes.certificate, now)
        for level in range(t.lifetimes.default_depth):
            chain = create_proxy_cert(chain, f"p{level}", rng.randrange(60, 10 ** 6), now)
            verdict = validate_chain(t.anchors, chain, now)
            if not verdict:
                valid_bad.append(verdict.reason)
            if chain.leaf.remaining_delegation_depth != chain.certs[1].remaining_delegation_depth - 1:
                depth_bad.append(str(level))
        try:
            create_proxy_cert(chain, "too-deep", 60, now)
            exhaust_bad.append("fourth delegation allowed")
        except DepthExhaustedError:
            pass
        leaf = chain.leaf
        wide = sign_proxy_cert(dataclasses.replace(leaf, not_after=chain.certs[1].not_after + 1), chain.certs[1])
        tampered = type(chain)((wide, *chain.certs[1:]))
        if validate_chain(t.anchors, tampered, now).reason != "window not nested":
            nest_bad.append("widened proxy window accepted")
    return [
        _prop("honest-chains-valid", valid_bad, n * t.lifetimes.default_depth),
        _prop("depth-decrements", depth_bad, n * t.lifetimes.default_depth),
        _prop("depth-exhaustion", exhaust_bad, n),
        _prop("window-nesting-enforced", nest_bad, n),
    ]


# -- policy ------------------------------------------------------------------------

def suite_policy() -> list[PropertyResult]:
    leaks, ran = [], 0
    for path in bundled_scenarios():
        s = load_scenario_file(path)
        report = run_scenario(s)
        leaks += [f"{path.stem}: {v}" for v in release_violations(s.topology, report.events)]
        ran += 1

    sid = ScopedId("0" * 32, "x.example")
    pool = [AttributeStatement("group", "g1", "aa:x"), AttributeStatement("group", "g2", "aa:x"),
            AttributeStatement("affiliation", "member", "idp:x"), AttributeStatement("role", "g1:admin", "aa:x")]
    rules = [Rule((("group", "g1"),), LoA.LOW), Rule((("affiliation", "member"), ("role", "g1:admin")), LoA.HIGH),
             Rule((("group", "*"),), LoA.SUBSTANTIAL)]
    mismatches, cases = [], 0
    for mask in range(16):
        chosen = [s for b, s in enumerate(pool) if mask >> b & 1]
        for loa in LoA:
            cid = CompositeIdentity(sid, tuple(chosen) + (
                AttributeStatement("unique-id", str(sid), "proxy:x", loa),), loa)
            names = {(s.name, s.value) for s in cid.statements}
            expect = any(all((n, v) in names or (v == "*" and any(x[0] == n for x in names))
                             for n, v in r.require) and loa >= r.min_loa for r in rules)
            cases += 1
            if authorize(AuthzPolicy("sp:x", tuple(rules)), cid).granted != expect:
                mismatches.append(f"mask {mask} loa {loa}")
    return [
        _prop("release-policy-respected", leaks, ran),
        _prop("authorize-matches-rule-semantics", mismatches, cases),
    ]


SUITES = {
    "trust": suite_trust,
    "ids": suite_ids,
    "translation": suite_translation,
    "delegation": suite_delegation,
    "policy": suite_policy,
}


def run_suite(name: str, snapshot: str | None = None) -> list[PropertyResult]:
    if name not in SUITES:
        raise KeyError(name)
    if name == "ids":
        return suite_ids(snapshot)
    return SUITES[name]()

