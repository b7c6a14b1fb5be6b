"""Entity graph and trust fabric.

A :class:`Topology` is loaded from a ``fedsim-topology v1`` document (YAML)
and is immutable afterwards. See ``docs/formats.md`` for the schema.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping

import yaml

from .errors import (
    DanglingReferenceError,
    DocumentFormatError,
    DuplicateEntityError,
    HubMissingError,
    InternalBehindNonProxyError,
    UnknownEntityError,
    UnknownFederationError,
)
from .integrity import KeyRegistry, derive_key, fingerprint
from .model import EntityId, LoA, Tech, normalize_name

TOPOLOGY_HEADER = "fedsim-topology v1"
SCENARIO_HEADER = "fedsim-scenario v1"
METADATA_HEADER = "fedsim-metadata v1"


class Kind(str, Enum):
    IDP = "IdP"
    OP = "OP"
    CA = "CA"
    SP = "SP"
    AA = "AA"
    VOMS = "VOMS"
    PROXY = "Proxy"
    TTS = "TTS"
    GUEST_IDP = "GuestIdP"
    SOCIAL_IDP = "SocialIdP"


AUTHENTICATING_KINDS = frozenset({Kind.IDP, Kind.OP, Kind.GUEST_IDP, Kind.SOCIAL_IDP})
GUEST_KINDS = frozenset({Kind.GUEST_IDP, Kind.SOCIAL_IDP})
ATTRIBUTE_KINDS = frozenset({Kind.AA, Kind.VOMS})

_DEFAULT_PROTOCOLS = {
    Kind.IDP: {Tech.SAML},
    Kind.OP: {Tech.OIDC},
    Kind.CA: {Tech.X509},
    Kind.VOMS: {Tech.X509},
    Kind.GUEST_IDP: {Tech.SAML},
    Kind.SOCIAL_IDP: {Tech.OIDC},
    Kind.AA: {Tech.SAML},
    Kind.SP: {Tech.SAML},
    Kind.PROXY: {Tech.SAML},
    Kind.TTS: set(),
}

_DEFAULT_LOA = {
    Kind.GUEST_IDP: LoA.LOW,
    Kind.SOCIAL_IDP: LoA.LOW,
}


@dataclass(frozen=True)
class Entity:
    id: EntityId
    kind: Kind
    federations: frozenset[str] = frozenset()
    internal_behind: EntityId | None = None
    protocols: frozenset[Tech] = frozenset()
    signing_key: str | None = None  # hex; derived from the key seed when unset
    trusted: frozenset[EntityId] = frozenset()
    flavor: str | None = None  # guest | social | egov for guest/social providers
    loa: LoA = LoA.SUBSTANTIAL
    available: bool = True


@dataclass(frozen=True)
class Federation:
    id: str
    model: str  # full-mesh | hub-and-spoke
    hub: EntityId | None = None
    members: frozenset[EntityId] = frozenset()
    interfederated: bool = False


@dataclass(frozen=True)
class UserEntry:
    handle: str
    subject: str
    attributes: tuple[tuple[str, str], ...] = ()
    loa: LoA | None = None  # None: provider default


@dataclass(frozen=True)
class AARecord:
    subject_key: Any  # (issuer, subject_id) tuple or rendered ScopedId string
    groups: frozenset[str] = frozenset()
    roles: frozenset[tuple[str, str]] = frozenset()
    custom: tuple[tuple[str, str], ...] = ()


@dataclass(frozen=True)
class AAConfig:
    admins: frozenset[str] = frozenset()
    assertion_loa: LoA = LoA.SUBSTANTIAL
    key_by: str = "home"  # home | unique-id
    scope: str | None = None  # scope used to resolve unique-id keyed records
    records: tuple[AARecord, ...] = ()


@dataclass(frozen=True)
class AggregatorConfig:
    """Configuration of an aggregating entity (an SP-IdP proxy or an SP-side registry)."""

    scope: str
    mapping: tuple[tuple[str, str], ...] = ()
    upstream_attributes: frozenset[str] = frozenset()
    aas: tuple[tuple[EntityId, bool], ...] = ()  # (aa, required)
    translators: tuple[EntityId, ...] = ()


@dataclass(frozen=True)
class Rule:
    require: tuple[tuple[str, str], ...] = ()  # value "*" matches anything
    min_loa: LoA = LoA.LOW


@dataclass(frozen=True)
class AuthzPolicy:
    sp: EntityId
    rules: tuple[Rule, ...] = ()


@dataclass(frozen=True)
class VomsRequest:
    voms: EntityId
    vo: str
    roles: frozenset[str] = frozenset()


@dataclass(frozen=True)
class SPConfig:
    policy: AuthzPolicy
    local_accounts: bool = False
    auto_provision: bool = False
    privilege_map: tuple[tuple[str, str], ...] = ()
    aggregation: str = "proxy"  # proxy | sp
    registry: EntityId | None = None
    aas: tuple[tuple[EntityId, bool], ...] = ()
    voms: VomsRequest | None = None
    site_translation: tuple[Tech, EntityId] | None = None  # (target tech, translator)
    oidc_delivery: str = "pull"  # delivery idiom when the proxy serves this SP via OIDC


@dataclass(frozen=True)
class TranslationRoute:
    tts: EntityId
    from_tech: Tech
    to_tech: Tech
    lifetime_s: int
    reference: bool = False  # TokenSet outputs use a reference access part

    def __post_init__(self):
        if self.lifetime_s <= 0:
            raise ValueError("route lifetime must be positive")


@dataclass(frozen=True)
class TranslatorConfig:
    routes: tuple[TranslationRoute, ...] = ()
    ca_parent: EntityId | None = None


@dataclass(frozen=True)
class Lifetimes:
    assertion: int = 300
    token: int = 3600
    code: int = 60
    voms: int = 43200
    certificate: int = 34128000
    default_depth: int = 3


@dataclass(frozen=True)
class Topology:
    entities: Mapping[EntityId, Entity]
    federations: Mapping[str, Federation]
    anchors: KeyRegistry
    release_policies: Mapping[tuple[EntityId, EntityId], frozenset[str]] = field(default_factory=dict)
    users: Mapping[EntityId, tuple[UserEntry, ...]] = field(default_factory=dict)
    attribute_authorities: Mapping[EntityId, AAConfig] = field(default_factory=dict)
    aggregators: Mapping[EntityId, AggregatorConfig] = field(default_factory=dict)
    sps: Mapping[EntityId, SPConfig] = field(default_factory=dict)
    translators: Mapping[EntityId, TranslatorConfig] = field(default_factory=dict)
    lifetimes: Lifetimes = Lifetimes()
    key_seed: str = "fedsim"
    name: str = ""

    def entity(self, entity_id: EntityId) -> Entity:
        try:
            return self.entities[entity_id]
        except KeyError:
            raise UnknownEntityError(f"unknown entity {entity_id!r}") from None

    def kind(self, entity_id: EntityId) -> Kind:
        return self.entity(entity_id).kind

    def release_policy(self, issuer: EntityId, audience: EntityId) -> frozenset[str]:
        return self.release_policies.get((issuer, audience), frozenset())

    def internal_sps(self, proxy: EntityId) -> list[EntityId]:
        return sorted(e.id for e in self.entities.values() if e.internal_behind == proxy)

    def routes_of(self, owner: EntityId) -> tuple[TranslationRoute, ...]:
        cfg = self.translators.get(owner)
        return cfg.routes if cfg else ()

    def route(self, owner: EntityId, from_tech: Tech, to_tech: Tech) -> TranslationRoute | None:
        for r in self.routes_of(owner):
            if r.from_tech == from_tech and r.to_tech == to_tech:
                return r
        return None


# -- trust ---------------------------------------------------------------------

def trusts(t: Topology, verifier: EntityId, issuer: EntityId) -> bool:
    """Whether ``verifier`` accepts statements issued by ``issuer``.

    Rules, in priority order: an internal SP trusts exactly its proxy; an
    entity never trusts itself; a proxy knows its own internal SPs; explicit
    anchors; shared full-mesh federation; hub-and-spoke edges touching the hub;
    distinct interfederated federations.
    """
    v = t.entity(verifier)
    i = t.entity(issuer)
    if v.internal_behind is not None:
        return issuer == v.internal_behind
    if verifier == issuer:
        return False
    if i.internal_behind == verifier:
        return True
    if issuer in v.trusted:
        return True
    shared = v.federations & i.federations
    for fid in sorted(shared):
        fed = t.federations[fid]
        if fed.model == "full-mesh":
            return True
        if fed.hub in (verifier, issuer):
            return True
    v_inter = {f for f in v.federations if t.federations[f].interfederated}
    i_inter = {f for f in i.federations if t.federations[f].interfederated}
    return any(a != b for a in v_inter for b in i_inter)


# -- metadata ------------------------------------------------------------------

def export_metadata(t: Topology, federation: str) -> dict:
    if federation not in t.federations:
        raise UnknownFederationError(f"unknown federation {federation!r}")
    fed = t.federations[federation]
    entries = []
    for eid in sorted(fed.members):
        ent = t.entities[eid]
        key = t.anchors.get(eid)
        entries.append({
            "id": eid,
            "kind": ent.kind.value,
            "protocols": sorted(p.value for p in ent.protocols),
            "fingerprint": fingerprint(key) if key is not None else None,
            "key": key.hex() if key is not None else None,
        })
    return {
        "format": METADATA_HEADER,
        "federation": fed.id,
        "model": fed.model,
        "hub": fed.hub,
        "interfederated": fed.interfederated,
        "entities": entries,
    }


def import_metadata(document: Mapping) -> KeyRegistry:
    if document.get("format") != METADATA_HEADER:
        raise DocumentFormatError("not a fedsim metadata document")
    keys = {}
    for entry in document.get("entities", []):
        if entry.get("key") is None:
            continue
        key = bytes.fromhex(entry["key"])
        if entry.get("fingerprint") and fingerprint(key) != entry["fingerprint"]:
            raise DocumentFormatError(f"fingerprint mismatch for {entry['id']}")
        keys[entry["id"]] = key
    return KeyRegistry(keys)


# -- invariants ----------------------------------------------------------------

@dataclass(frozen=True, order=True)
class Finding:
    rule: str
    entity: str
    detail: str = ""

    def __str__(self) -> str:
        return f"{self.rule}: {self.entity}" + (f" ({self.detail})" if self.detail else "")


def _protocols_compatible(ent: Entity) -> bool:
    p = ent.protocols
    if ent.kind in (Kind.CA, Kind.VOMS):
        return p == {Tech.X509}
    if ent.kind == Kind.IDP:
        return p == {Tech.SAML}
    if ent.kind == Kind.OP:
        return p == {Tech.OIDC}
    if ent.kind in GUEST_KINDS:
        return bool(p) and p <= {Tech.SAML, Tech.OIDC}
    return True


def validate_invariants(t: Topology) -> list[Finding]:
    """Structural and SP-friendliness checks; empty list means clean."""
    found: list[Finding] = []
    ents = t.entities

    for eid, ent in ents.items():
        if ent.id != eid:
            found.append(Finding("entity-id-mismatch", eid, ent.id))
        if "|" in eid:
            found.append(Finding("pipe-in-entity-id", eid))
        if not _protocols_compatible(ent):
            found.append(Finding("kind-protocol-mismatch", eid,
                                 f"{ent.kind.value}: {','.join(sorted(p.value for p in ent.protocols))}"))
        if eid not in t.anchors:
            found.append(Finding("missing-anchor", eid))
        for fid in ent.federations:
            if fid not in t.federations:
                found.append(Finding("dangling-reference", eid, f"federation {fid}"))
            elif eid not in t.federations[fid].members:
                found.append(Finding("membership-mismatch", eid, fid))
        for other in ent.trusted:
            if other not in ents:
                found.append(Finding("dangling-reference", eid, f"anchor {other}"))
        if ent.internal_behind is not None:
            if ent.kind != Kind.SP:
                found.append(Finding("internal-behind-on-non-sp", eid))
            target = ents.get(ent.internal_behind)
            if target is None:
                found.append(Finding("dangling-reference", eid, f"proxy {ent.internal_behind}"))
            elif target.kind != Kind.PROXY:
                found.append(Finding("internal-behind-non-proxy", eid, ent.internal_behind))
            extra = sorted(ent.trusted - {ent.internal_behind})
            if extra:
                found.append(Finding("internal-sp-multiple-trust", eid, ",".join(extra)))
            if ent.federations:
                found.append(Finding("internal-sp-multiple-trust", eid,
                                     "federations " + ",".join(sorted(ent.federations))))

    for fid, fed in t.federations.items():
        for member in sorted(fed.members):
            if member not in ents:
                found.append(Finding("dangling-member", fid, member))
            elif fid not in ents[member].federations:
                found.append(Finding("membership-mismatch", member, fid))
        if fed.model == "hub-and-spoke":
            if fed.hub is None or fed.hub not in fed.members:
                found.append(Finding("hub-missing", fid))
        elif fed.model == "full-mesh":
            if fed.hub is not None:
                found.append(Finding("hub-on-full-mesh", fid))
        else:
            found.append(Finding("unknown-federation-model", fid, fed.model))

    refs: list[tuple[str, str, str]] = []
    for (issuer, audience) in t.release_policies:
        refs += [("policy", issuer, issuer), ("policy", issuer, audience)]
    for agg, cfg in t.aggregators.items():
        refs.append(("aggregator", agg, agg))
        refs += [("aggregator", agg, aa) for aa, _ in cfg.aas]
        refs += [("aggregator", agg, tr) for tr in cfg.translators]
    for sp, cfg in t.sps.items():
        refs.append(("sp-config", sp, sp))
        if cfg.registry:
            refs.append(("sp-config", sp, cfg.registry))
        refs += [("sp-config", sp, aa) for aa, _ in cfg.aas]
        if cfg.voms:
            refs.append(("sp-config", sp, cfg.voms.voms))
        if cfg.site_translation:
            refs.append(("sp-config", sp, cfg.site_translation[1]))
    for owner, cfg in t.translators.items():
        refs.append(("translator", owner, owner))
        if cfg.ca_parent:
            refs.append(("translator", owner, cfg.ca_parent))
    for owner in list(t.users) + list(t.attribute_authorities):
        refs.append(("store", owner, owner))
    for what, owner, target in refs:
        if target not in ents:
            found.append(Finding("dangling-reference", owner, f"{what} {target}"))

    return sorted(set(found))


# -- document I/O --------------------------------------------------------------

_LOAD_ERRORS = {
    "dangling-member": DanglingReferenceError,
    "dangling-reference": DanglingReferenceError,
    "hub-missing": HubMissingError,
    "internal-behind-non-proxy": InternalBehindNonProxyError,
}
_SOFT_RULES = {"internal-sp-multiple-trust"}


def _req(d: Mapping, key: str, where: str):
    if key not in d:
        raise DocumentFormatError(f"{where}: missing field {key!r}")
    return d[key]


def _as_list(value) -> list:
    if value is None:
        return []
    if isinstance(value, (list, tuple)):
        return list(value)
    return [value]


def _pairs(mapping: Mapping | None, normalize: bool = False) -> tuple[tuple[str, str], ...]:
    out = []
    for name, value in (mapping or {}).items():
        name = normalize_name(str(name)) if normalize else str(name)
        for v in _as_list(value):
            out.append((name, str(v)))
    return tuple(sorted(out))


def _pairs_to_mapping(pairs) -> dict:
    out: dict[str, Any] = {}
    for name, value in pairs:
        if name in out:
            prev = out[name]
            out[name] = (prev if isinstance(prev, list) else [prev]) + [value]
        else:
            out[name] = value
    return out


def _techs(values) -> frozenset[Tech]:
    try:
        return frozenset(Tech(v) for v in _as_list(values))
    except ValueError as exc:
        raise DocumentFormatError(str(exc)) from None


def parse_document(text: str) -> dict:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise DocumentFormatError(f"unparseable document: {exc}") from None
    if not isinstance(doc, dict):
        raise DocumentFormatError("document must be a mapping")
    if doc.get("format") not in (TOPOLOGY_HEADER, SCENARIO_HEADER):
        raise DocumentFormatError(
            f"missing header: expected 'format: {TOPOLOGY_HEADER}' (or {SCENARIO_HEADER})")
    return doc


def _parse_subject_key(raw) -> Any:
    if isinstance(raw, str):
        return raw
    if isinstance(raw, Mapping):
        if "unique_id" in raw:
            return str(raw["unique_id"])
        return (str(_req(raw, "issuer", "record")), str(_req(raw, "subject_id", "record")))
    if isinstance(raw, (list, tuple)) and len(raw) == 2:
        return (str(raw[0]), str(raw[1]))
    raise DocumentFormatError(f"bad subject key {raw!r}")


def _parse_aas(raw) -> tuple[tuple[EntityId, bool], ...]:
    out = []
    for item in _as_list(raw):
        if isinstance(item, str):
            out.append((item, True))
        else:
            out.append((str(_req(item, "id", "aa ref")), bool(item.get("required", True))))
    return tuple(out)


def _parse_policy(sp: EntityId, raw) -> AuthzPolicy:
    rules = []
    for r in _as_list((raw or {}).get("rules")):
        rules.append(Rule(require=_pairs(r.get("require"), normalize=True),
                          min_loa=LoA.parse(r.get("min_loa", "low"))))
    return AuthzPolicy(sp, tuple(rules))


def from_document(doc: Mapping, strict: bool = True) -> Topology:
    """Build a topology from a parsed document mapping.

    With ``strict`` (the default) any hard invariant finding raises; the
    ``validate`` command turns it off so it can report every finding.
    """
    seed = str(doc.get("key_seed", "fedsim"))
    lt = doc.get("lifetimes") or {}
    try:
        lifetimes = Lifetimes(**{k: int(v) for k, v in lt.items()})
    except TypeError as exc:
        raise DocumentFormatError(f"lifetimes: {exc}") from None

    raw_feds = _as_list(doc.get("federations"))
    fed_members: dict[str, set] = {}
    feds_raw: dict[str, Mapping] = {}
    for f in raw_feds:
        fid = str(_req(f, "id", "federation"))
        if fid in feds_raw:
            raise DocumentFormatError(f"duplicate federation {fid!r}")
        feds_raw[fid] = f
        fed_members[fid] = {str(m) for m in _as_list(f.get("members"))}

    entities: dict[EntityId, Entity] = {}
    keys: dict[EntityId, bytes] = {}
    users: dict[EntityId, tuple[UserEntry, ...]] = {}
    aa_cfgs: dict[EntityId, AAConfig] = {}
    aggs: dict[EntityId, AggregatorConfig] = {}
    sps: dict[EntityId, SPConfig] = {}
    translators: dict[EntityId, TranslatorConfig] = {}

    for e in _as_list(doc.get("entities")):
        eid = str(_req(e, "id", "entity"))
        if eid in entities:
            raise DuplicateEntityError(f"duplicate entity id {eid!r}")
        if "|" in eid:
            raise DocumentFormatError(f"entity id {eid!r} must not contain '|'")
        try:
            kind = Kind(_req(e, "kind", eid))
        except ValueError:
            raise DocumentFormatError(f"{eid}: unknown kind {e['kind']!r}") from None
        declared_feds = {str(x) for x in _as_list(e.get("federations"))}
        for fid in declared_feds:
            if fid not in fed_members:
                raise DanglingReferenceError(f"{eid}: dangling entity reference to federation {fid!r}")
            fed_members[fid].add(eid)
        protocols = _techs(e["protocols"]) if "protocols" in e else frozenset(_DEFAULT_PROTOCOLS[kind])
        flavor = e.get("flavor")
        if flavor is None and kind in GUEST_KINDS:
            flavor = "guest" if kind == Kind.GUEST_IDP else "social"
        default_loa = _DEFAULT_LOA.get(kind, LoA.SUBSTANTIAL)
        if flavor == "egov":
            default_loa = LoA.SUBSTANTIAL
        ent = Entity(
            id=eid,
            kind=kind,
            internal_behind=e.get("internal_behind"),
            protocols=protocols,
            signing_key=e.get("key"),
            trusted=frozenset(str(x) for x in _as_list(e.get("trusted"))),
            flavor=flavor,
            loa=LoA.parse(e.get("loa", default_loa)),
            available=bool(e.get("available", True)),
        )
        entities[eid] = ent
        keys[eid] = bytes.fromhex(ent.signing_key) if ent.signing_key else derive_key(seed, eid)

        if "users" in e:
            users[eid] = tuple(
                UserEntry(handle=str(u.get("handle", u["subject"])), subject=str(_req(u, "subject", eid)),
                          attributes=_pairs(u.get("attributes"), normalize=True),
                          loa=LoA.parse(u["loa"]) if "loa" in u else None)
                for u in _as_list(e["users"]))
        if kind in ATTRIBUTE_KINDS:
            aa_cfgs[eid] = AAConfig(
                admins=frozenset(str(a) for a in _as_list(e.get("admins"))),
                assertion_loa=LoA.parse(e.get("assertion_loa", "substantial")),
                key_by=str(e.get("key_by", "home")),
                scope=e.get("scope") if kind in ATTRIBUTE_KINDS else None,
                records=tuple(
                    AARecord(subject_key=_parse_subject_key(_req(r, "subject", eid)),
                             groups=frozenset(str(g) for g in _as_list(r.get("groups"))),
                             roles=frozenset((str(g), str(ro)) for g, ro in _as_list(r.get("roles"))),
                             custom=_pairs(r.get("custom"), normalize=True))
                    for r in _as_list(e.get("records"))))
        if kind == Kind.PROXY or (kind == Kind.SP and "scope" in e):
            aggs[eid] = AggregatorConfig(
                scope=str(e.get("scope", eid.partition(":")[2] or eid)),
                mapping=tuple(sorted((str(k), str(v)) for k, v in (e.get("mapping") or {}).items())),
                upstream_attributes=frozenset(str(a) for a in _as_list(e.get("upstream_attributes"))),
                aas=_parse_aas(e.get("aas")),
                translators=tuple(str(x) for x in _as_list(e.get("translators"))),
            )
        if kind == Kind.SP:
            site = e.get("site_translation")
            voms = e.get("voms")
            sps[eid] = SPConfig(
                policy=_parse_policy(eid, e.get("policy")),
                local_accounts=bool(e.get("local_accounts", False)),
                auto_provision=bool(e.get("auto_provision", False)),
                privilege_map=tuple(sorted((str(k), str(v)) for k, v in (e.get("privilege_map") or {}).items())),
                aggregation=str(e.get("aggregation", "proxy")),
                registry=e.get("registry"),
                aas=_parse_aas(e.get("aas")),
                voms=VomsRequest(str(voms["id"]), str(voms["vo"]),
                                 frozenset(str(r) for r in _as_list(voms.get("roles")))) if voms else None,
                site_translation=(Tech(site["to"]), str(site.get("via", eid))) if site else None,
                oidc_delivery=str(e.get("oidc_delivery", "pull")),
            )
        if "routes" in e or "ca_parent" in e:
            routes = []
            for r in _as_list(e.get("routes")):
                try:
                    routes.append(TranslationRoute(
                        tts=eid, from_tech=Tech(_req(r, "from", eid)), to_tech=Tech(_req(r, "to", eid)),
                        lifetime_s=int(r.get("lifetime", 43200)), reference=bool(r.get("reference", False))))
                except ValueError as exc:
                    raise DocumentFormatError(f"{eid}: bad route: {exc}") from None
            translators[eid] = TranslatorConfig(tuple(routes), e.get("ca_parent"))

    federations: dict[str, Federation] = {}
    for fid, f in feds_raw.items():
        members = fed_members[fid]
        for m in sorted(members):
            if strict and m not in entities:
                raise DanglingReferenceError(f"federation {fid!r}: dangling entity reference {m!r}")
        model = str(f.get("model", "full-mesh"))
        hub = f.get("hub")
        if strict and model == "hub-and-spoke" and (hub is None or hub not in members):
            raise HubMissingError(f"federation {fid!r}: hub missing")
        federations[fid] = Federation(fid, model, hub, frozenset(members), bool(f.get("interfederated", False)))

    for eid, ent in list(entities.items()):
        feds = frozenset(fid for fid, m in fed_members.items() if eid in m)
        entities[eid] = dataclasses.replace(ent, federations=feds)

    policies: dict[tuple[EntityId, EntityId], frozenset[str]] = {}
    for p in _as_list(doc.get("policies")):
        key = (str(_req(p, "issuer", "policy")), str(_req(p, "audience", "policy")))
        names = frozenset(normalize_name(str(n)) for n in _as_list(p.get("release")))
        policies[key] = policies.get(key, frozenset()) | names

    t = Topology(
        entities=entities, federations=federations, anchors=KeyRegistry(keys),
        release_policies=policies, users=users, attribute_authorities=aa_cfgs,
        aggregators=aggs, sps=sps, translators=translators, lifetimes=lifetimes,
        key_seed=seed, name=str(doc.get("name", "")),
    )
    for finding in validate_invariants(t) if strict else ():
        if finding.rule in _SOFT_RULES:
            continue
        exc = _LOAD_ERRORS.get(finding.rule, DocumentFormatError)
        raise exc(f"{exc.code}: {finding}")
    return t


def load_topology(text: str) -> Topology:
    """Parse a topology (or scenario) document into a checked Topology."""
    return from_document(parse_document(text))


def to_document(t: Topology) -> dict:
    """Inverse of :func:`from_document` (scenario sections are not included)."""
    entities = []
    for eid in sorted(t.entities):
        ent = t.entities[eid]
        d: dict[str, Any] = {"id": eid, "kind": ent.kind.value,
                             "protocols": sorted(p.value for p in ent.protocols)}
        if ent.internal_behind:
            d["internal_behind"] = ent.internal_behind
        if ent.signing_key:
            d["key"] = ent.signing_key
        if ent.trusted:
            d["trusted"] = sorted(ent.trusted)
        if ent.flavor:
            d["flavor"] = ent.flavor
        d["loa"] = str(ent.loa)
        if not ent.available:
            d["available"] = False
        if eid in t.users:
            d["users"] = [
                {"handle": u.handle, "subject": u.subject, "attributes": _pairs_to_mapping(u.attributes),
                 **({"loa": str(u.loa)} if u.loa is not None else {})}
                for u in t.users[eid]]
        if eid in t.attribute_authorities:
            aa = t.attribute_authorities[eid]
            d["admins"] = sorted(aa.admins)
            d["assertion_loa"] = str(aa.assertion_loa)
            d["key_by"] = aa.key_by
            if aa.scope is not None:
                d["scope"] = aa.scope
            recs = []
            for r in aa.records:
                key = r.subject_key
                subj = {"unique_id": key} if isinstance(key, str) else {"issuer": key[0], "subject_id": key[1]}
                recs.append({"subject": subj, "groups": sorted(r.groups),
                             "roles": [list(x) for x in sorted(r.roles)],
                             "custom": _pairs_to_mapping(r.custom)})
            d["records"] = recs
        if eid in t.aggregators:
            agg = t.aggregators[eid]
            d["scope"] = agg.scope
            d["mapping"] = dict(agg.mapping)
            d["upstream_attributes"] = sorted(agg.upstream_attributes)
            d["aas"] = [{"id": a, "required": req} for a, req in agg.aas]
            d["translators"] = list(agg.translators)
        if eid in t.sps:
            sp = t.sps[eid]
            d["policy"] = {"rules": [{"require": _pairs_to_mapping(r.require), "min_loa": str(r.min_loa)}
                                     for r in sp.policy.rules]}
            d["local_accounts"] = sp.local_accounts
            d["auto_provision"] = sp.auto_provision
            d["privilege_map"] = dict(sp.privilege_map)
            d["aggregation"] = sp.aggregation
            if sp.registry:
                d["registry"] = sp.registry
            if sp.aas and eid not in t.aggregators:
                d["aas"] = [{"id": a, "required": req} for a, req in sp.aas]
            if sp.voms:
                d["voms"] = {"id": sp.voms.voms, "vo": sp.voms.vo, "roles": sorted(sp.voms.roles)}
            if sp.site_translation:
                d["site_translation"] = {"to": sp.site_translation[0].value, "via": sp.site_translation[1]}
            d["oidc_delivery"] = sp.oidc_delivery
        if eid in t.translators:
            tr = t.translators[eid]
            d["routes"] = [{"from": r.from_tech.value, "to": r.to_tech.value,
                            "lifetime": r.lifetime_s, "reference": r.reference} for r in tr.routes]
            if tr.ca_parent:
                d["ca_parent"] = tr.ca_parent
        entities.append(d)
    feds = [{"id": f.id, "model": f.model, **({"hub": f.hub} if f.hub else {}),
             "members": sorted(f.members), "interfederated": f.interfederated}
            for _, f in sorted(t.federations.items())]
    policies = [{"issuer": i, "audience": a, "release": sorted(n)}
                for (i, a), n in sorted(t.release_policies.items())]
    return {
        "format": TOPOLOGY_HEADER,
        "name": t.name,
        "key_seed": t.key_seed,
        "lifetimes": dataclasses.asdict(t.lifetimes),
        "entities": entities,
        "federations": feds,
        "policies": policies,
    }


def dump_topology(t: Topology) -> str:
    return yaml.safe_dump(to_document(t), sort_keys=False, allow_unicode=True)
