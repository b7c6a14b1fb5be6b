"""SP-IdP proxy: persistent identifiers, attribute aggregation and
harmonization, and downstream issuance toward internal SPs."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from collections import defaultdict
from dataclasses import dataclass, field

from .attributes import query_attributes
from .errors import (
    CollisionError,
    DocumentFormatError,
    NoTranslationPathError,
    NotInternalError,
    SourceUnavailableError,
)
from .idp import AuthnRequest
from .integrity import sign
from .model import (
    RAW_PREFIX,
    Assertion,
    AttributeCertificate,
    AttributeStatement,
    CompositeIdentity,
    Delivery,
    EntityId,
    LoA,
    ReferenceAccess,
    ScopedId,
    SelfContainedAccess,
    Tech,
    TokenSet,
    is_canonical,
    loa_combine,
    normalize_name,
)
from .topology import Topology
from .translation import end_entity_chain, translate
from .world import ReferenceEntry, World

REGISTRY_HEADER = "fedsim-registry v1"

# Names for which the home organisation beats community sources.
HOME_NAMES = frozenset({"display-name", "mail", "affiliation"})

IdentityKey = tuple  # (issuer, subject_id)


def unique_id_digest(issuer: EntityId, subject_id: str) -> str:
    return hashlib.sha256(f"{issuer}|{subject_id}".encode("utf-8")).hexdigest()[:32]


@dataclass
class IdRegistry:
    """Append-only map from upstream identities to persistent identifiers.

    ``bindings`` hold first-seen identities; ``aliases`` hold identities linked
    to an existing binding later on.
    """

    bindings: dict[IdentityKey, ScopedId] = field(default_factory=dict)
    reverse: dict[ScopedId, IdentityKey] = field(default_factory=dict)
    aliases: dict[IdentityKey, ScopedId] = field(default_factory=dict)

    def lookup(self, issuer: EntityId, subject_id: str) -> ScopedId | None:
        key = (issuer, subject_id)
        return self.bindings.get(key) or self.aliases.get(key)

    def bind(self, issuer: EntityId, subject_id: str, sid: ScopedId) -> None:
        key = (issuer, subject_id)
        existing = self.lookup(issuer, subject_id)
        if existing is not None:
            if existing != sid:
                raise CollisionError(f"{issuer}|{subject_id} already bound to {existing}")
            return
        owner = self.reverse.get(sid)
        if owner is not None and owner != key:
            raise CollisionError(f"collision: {sid} already bound to {owner[0]}|{owner[1]}")
        self.bindings[key] = sid
        self.reverse[sid] = key

    def link(self, issuer: EntityId, subject_id: str, sid: ScopedId) -> None:
        if sid not in self.reverse:
            raise KeyError(f"{sid} is not bound")
        existing = self.lookup(issuer, subject_id)
        if existing is not None and existing != sid:
            raise CollisionError(f"{issuer}|{subject_id} already bound to {existing}")
        if existing is None:
            self.aliases[(issuer, subject_id)] = sid

    def export_snapshot(self) -> str:
        doc = {
            "format": REGISTRY_HEADER,
            "bindings": sorted([i, s, str(sid)] for (i, s), sid in self.bindings.items()),
            "aliases": sorted([i, s, str(sid)] for (i, s), sid in self.aliases.items()),
        }
        return json.dumps(doc, sort_keys=True, indent=1) + "\n"

    @classmethod
    def import_snapshot(cls, text: str) -> IdRegistry:
        try:
            doc = json.loads(text)
            if doc.get("format") != REGISTRY_HEADER:
                raise DocumentFormatError("not a registry snapshot")
            reg = cls()
            for issuer, subject, sid in doc.get("bindings", []):
                reg.bind(issuer, subject, ScopedId.parse(sid))
            for issuer, subject, sid in doc.get("aliases", []):
                reg.link(issuer, subject, ScopedId.parse(sid))
        except (ValueError, TypeError, KeyError, AttributeError) as exc:
            raise DocumentFormatError(f"bad registry snapshot: {exc}") from None
        return reg


def derive_unique_id(registry: IdRegistry, issuer: EntityId, subject_id: str, scope: str) -> ScopedId:
    if not issuer or not subject_id:
        raise ValueError("issuer and subject_id must be non-empty")
    existing = registry.lookup(issuer, subject_id)
    if existing is not None:
        return existing
    sid = ScopedId(unique_id_digest(issuer, subject_id), scope)
    registry.bind(issuer, subject_id, sid)
    return sid


def scoped_id_for(world: World, owner: EntityId, issuer: EntityId, subject_id: str) -> ScopedId:
    """Persistent id minted by ``owner``; linked identities of the same
    principal alias to whichever identity was seen first."""
    registry = world.registry(owner)
    found = registry.lookup(issuer, subject_id)
    if found is not None:
        return found
    rec = world.principal_by_identity(issuer, subject_id)
    if rec is not None:
        for other in rec.identity_keys():
            sid = registry.lookup(*other)
            if sid is not None:
                registry.link(issuer, subject_id, sid)
                return sid
    scope = world.topology.aggregators[owner].scope
    sid = derive_unique_id(registry, issuer, subject_id, scope)
    if rec is not None and rec.persistent_unique_id is None:
        world.principals[rec.handle] = dataclasses.replace(rec, persistent_unique_id=sid)
    return sid


def handle_sp_request(t: Topology, proxy: EntityId, req: AuthnRequest, upstream: EntityId) -> AuthnRequest:
    """Re-originate an internal SP's request toward ``upstream`` as the proxy."""
    if t.entity(req.requester).internal_behind != proxy:
        raise NotInternalError(f"not my internal SP: {req.requester}")
    t.entity(upstream)
    wanted = t.aggregators[proxy].upstream_attributes if proxy in t.aggregators else frozenset()
    return AuthnRequest(requester=proxy, audience=upstream, wanted_attributes=wanted, binding=req.binding)


def harmonize(mapping, statements) -> list[AttributeStatement]:
    """Rename via ``mapping`` (keys may omit the ``raw:`` prefix); canonical
    names pass through, anything else stays ``raw:``."""
    mapping = dict(mapping)
    out = []
    for s in statements:
        if is_canonical(s.name):
            name = s.name
        else:
            base = s.name[len(RAW_PREFIX):] if s.name.startswith(RAW_PREFIX) else s.name
            target = mapping.get(base, mapping.get(s.name))
            name = normalize_name(target) if target else RAW_PREFIX + base
        out.append(s if name == s.name else AttributeStatement(name, s.value, s.issuer, s.loa, s.scope, s.delivery))
    return sorted(out, key=lambda s: (s.name, s.issuer, s.value))


def merge_sources(home: list[AttributeStatement], aa_sources: list[list[AttributeStatement]]) -> list[AttributeStatement]:
    """Winner takes a whole name. Community names go to the last AA that has
    them, home names to home, any other name to the latest source."""
    by_source: list[dict[str, list[AttributeStatement]]] = []
    for src in [home, *aa_sources]:
        d: dict[str, list] = defaultdict(list)
        for s in src:
            if s.name != "unique-id":
                d[s.name].append(s)
        by_source.append(d)
    names = sorted({n for d in by_source for n in d})
    merged = []
    for name in names:
        providers = [i for i, d in enumerate(by_source) if name in d]
        if name in HOME_NAMES and 0 in providers:
            winner = 0
        else:
            winner = providers[-1]
        merged.extend(by_source[winner][name])
    return merged


def build_composite(owner: EntityId, sid: ScopedId, home, sources, home_issuer: EntityId,
                    auth_loa: LoA | None = None, log=(), skipped=()) -> CompositeIdentity:
    """Merge harmonized sources and inject the unique-id statement.

    Only statements from the authenticating issuer set the effective LoA;
    community statements never raise it.
    """
    levels = [s.loa for s in home if s.issuer == home_issuer] or [auth_loa or LoA.LOW]
    effective = loa_combine(levels)
    statements = merge_sources(list(home), [list(x) for x in sources])
    statements.append(AttributeStatement("unique-id", str(sid), owner, effective, sid.scope, Delivery.PUSH))
    return CompositeIdentity(sid, tuple(statements), effective, tuple(log), tuple(skipped))


def aggregate(world: World, owner: EntityId, home, aas, subject_key: IdentityKey,
              requester: EntityId | None = None, auth_loa: LoA | None = None) -> CompositeIdentity:
    """Build the composite identity for ``subject_key`` at aggregator ``owner``.

    ``aas`` is an ordered list of AA ids or ``(id, required)`` pairs.
    """
    t = world.topology
    cfg = t.aggregators[owner]
    issuer, subject_id = subject_key
    sid = scoped_id_for(world, owner, issuer, subject_id)
    home_h = harmonize(cfg.mapping, home)
    sources, skipped = [], []
    log = [(issuer, len(home_h))]
    for entry in aas:
        aa, required = (entry, True) if isinstance(entry, str) else entry
        if not t.entity(aa).available:
            if required:
                raise SourceUnavailableError(f"required source unavailable: {aa}")
            skipped.append(aa)
            continue
        key = str(sid) if t.attribute_authorities[aa].key_by == "unique-id" else (issuer, subject_id)
        got = harmonize(cfg.mapping, query_attributes(world, aa, key, requester or owner))
        sources.append(got)
        log.append((aa, len(got)))
    return build_composite(owner, sid, home_h, sources, issuer, auth_loa, log, skipped)


# -- downstream issuance ----------------------------------------------------------

@dataclass(frozen=True)
class DownstreamPlan:
    kind: str  # native | route | central
    tech: Tech
    via: EntityId | None = None
    from_tech: Tech | None = None


def downstream_plan(t: Topology, proxy: EntityId, tech: Tech, upstream_tech: Tech | None = None) -> DownstreamPlan:
    """How the proxy produces a ``tech`` credential for an internal SP."""
    native = t.entity(proxy).protocols
    if tech == upstream_tech and tech in native:
        return DownstreamPlan("native", tech)
    if upstream_tech is not None and t.route(proxy, upstream_tech, tech):
        return DownstreamPlan("route", tech, proxy, upstream_tech)
    if tech in native:
        return DownstreamPlan("native", tech)
    for src in sorted(native, key=lambda x: x.value):
        if t.route(proxy, src, tech):
            return DownstreamPlan("route", tech, proxy, src)
    translators = t.aggregators[proxy].translators if proxy in t.aggregators else ()
    preferred = sorted(native, key=lambda x: (x != upstream_tech, x.value))
    for tts in translators:
        for src in preferred:
            if t.route(tts, src, tech):
                return DownstreamPlan("central", tech, tts, src)
    raise NoTranslationPathError(f"no translation path from {proxy} to {tech.value}")


def released_to(t: Topology, issuer: EntityId, audience: EntityId, statements) -> tuple[AttributeStatement, ...]:
    policy = t.release_policy(issuer, audience)
    return tuple(s for s in statements if s.name in policy)


def issue_native(world: World, proxy: EntityId, audience: EntityId, cid: CompositeIdentity,
                 tech: Tech, now: int, statements, oidc_delivery: str = "push"):
    t = world.topology
    subject = str(cid.persistent_unique_id)
    if tech == Tech.SAML:
        return sign(t.anchors, Assertion(subject, proxy, audience, statements, now, now,
                                         now + t.lifetimes.assertion))
    if tech == Tech.OIDC:
        not_after = now + t.lifetimes.token
        id_claims = (("aud", audience), ("iss", proxy), ("sub", subject))
        if oidc_delivery == "pull":
            ref = world.next_id("ref")
            world.references[ref] = ReferenceEntry(
                proxy, subject, audience, not_after, tuple(s.with_delivery(Delivery.PULL) for s in statements))
            access = ReferenceAccess(ref)
        else:
            access = SelfContainedAccess(tuple(statements))
        return sign(t.anchors, TokenSet(subject, proxy, audience, id_claims, access, not_after))
    ac = None
    if statements:
        ac = sign(t.anchors, AttributeCertificate(subject, proxy, statements, now, now + t.lifetimes.voms))
    return end_entity_chain(t, proxy, subject, now, now + t.lifetimes.voms, ac)


def issue_downstream(world: World, proxy: EntityId, internal_sp: EntityId, cid: CompositeIdentity,
                     tech: Tech, now: int, upstream_tech: Tech | None = None):
    """Credential from the proxy to one of its internal SPs."""
    t = world.topology
    if t.entity(internal_sp).internal_behind != proxy:
        raise NotInternalError(f"not my internal SP: {internal_sp}")
    plan = downstream_plan(t, proxy, tech, upstream_tech)
    statements = released_to(t, proxy, internal_sp, cid.statements)
    sp_cfg = t.sps.get(internal_sp)
    delivery = sp_cfg.oidc_delivery if sp_cfg else "pull"
    if plan.kind == "native":
        return issue_native(world, proxy, internal_sp, cid, tech, now, statements, delivery)
    staged = issue_native(world, proxy, internal_sp, cid, plan.from_tech, now, statements, "push")
    return translate(world, plan.via, staged, tech, now, audience=internal_sp)
