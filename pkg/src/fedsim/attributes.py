"""Attribute Enrichment layer: SAML-style attribute authorities (pull), VOMS
(push into certificates) and the OIDC userinfo endpoint (pull)."""

from __future__ import annotations

import dataclasses

from .errors import (
    MembershipError,
    NonProxyLeafError,
    NotMemberError,
    RoleNotHeldError,
    TokenExpiredError,
    UnauthorizedAdminError,
    UnknownRelyingPartyError,
    UnknownReferenceError,
    UnverifiableInputError,
    WrongProviderKindError,
)
from .integrity import sign, sign_proxy_cert, verify_integrity
from .model import (
    AttributeCertificate,
    AttributeStatement,
    CertChain,
    Delivery,
    EntityId,
    ReferenceAccess,
    ScopedId,
    TokenSet,
    sort_statements,
)
from .topology import AARecord, Kind, trusts
from .translation import validate_chain
from .world import World

MEMBERSHIP_CHANGES = ("add_group", "remove_group", "add_role", "remove_role")


def _record_key(subject_key):
    if isinstance(subject_key, ScopedId):
        return str(subject_key)
    if isinstance(subject_key, list):
        return tuple(subject_key)
    return subject_key


def _require_rp(world: World, aa: EntityId, requester: EntityId) -> None:
    world.topology.entity(requester)
    if not trusts(world.topology, aa, requester):
        raise UnknownRelyingPartyError(f"{aa} does not know {requester}")


def record_statements(world: World, aa: EntityId, record: AARecord,
                      delivery: Delivery) -> list[AttributeStatement]:
    loa = world.topology.attribute_authorities[aa].assertion_loa
    out = [AttributeStatement("group", g, aa, loa, None, delivery) for g in sorted(record.groups)]
    out += [AttributeStatement("role", f"{g}:{r}", aa, loa, None, delivery) for g, r in sorted(record.roles)]
    out += [AttributeStatement(n, v, aa, loa, None, delivery) for n, v in record.custom]
    return out


def query_attributes(world: World, aa: EntityId, subject_key, requester: EntityId) -> list[AttributeStatement]:
    """Pull query; an unknown subject yields an empty list."""
    if world.topology.kind(aa) not in (Kind.AA, Kind.VOMS):
        raise WrongProviderKindError(f"{aa} is not an attribute authority")
    _require_rp(world, aa, requester)
    record = world.aa_records.get(aa, {}).get(_record_key(subject_key))
    if record is None:
        return []
    policy = world.topology.release_policy(aa, requester)
    return list(sort_statements(s for s in record_statements(world, aa, record, Delivery.PULL)
                                if s.name in policy))


def voms_subject_key(world: World, voms: EntityId, chain: CertChain):
    cfg = world.topology.attribute_authorities[voms]
    ee = chain.end_entity
    if cfg.key_by == "unique-id":
        return ee.subject_name
    return (ee.issuer_name, ee.subject_name)


def voms_extend(world: World, voms: EntityId, chain: CertChain, vo: str,
                requested_roles, now: int) -> CertChain:
    """Attach a VOMS attribute certificate to the proxy leaf of ``chain``."""
    t = world.topology
    if t.kind(voms) != Kind.VOMS:
        raise WrongProviderKindError(f"{voms} is not a VOMS")
    verdict = validate_chain(t.anchors, chain, now)
    if not verdict:
        raise UnverifiableInputError(verdict.reason)
    leaf = chain.leaf
    if not leaf.is_proxy:
        raise NonProxyLeafError("VOMS extensions attach to proxy certificates only")
    record = world.aa_records.get(voms, {}).get(voms_subject_key(world, voms, chain))
    if record is None or vo not in record.groups:
        raise NotMemberError(f"{chain.subject} is not a member of {vo}")
    roles = sorted(set(requested_roles))
    for role in roles:
        if (vo, role) not in record.roles:
            raise RoleNotHeldError(f"role not held: {vo}:{role}")
    loa = t.attribute_authorities[voms].assertion_loa
    statements = [AttributeStatement("group", vo, voms, loa, None, Delivery.PUSH)]
    statements += [AttributeStatement("role", f"{vo}:{r}", voms, loa, None, Delivery.PUSH) for r in roles]
    ac = sign(t.anchors, AttributeCertificate(
        holder=chain.subject, issuer=voms, statements=statements,
        not_before=now, not_after=min(leaf.not_after, now + t.lifetimes.voms)))
    new_leaf = sign_proxy_cert(dataclasses.replace(leaf, attr_cert=ac, integrity=None), chain.certs[1])
    return CertChain((new_leaf, *chain.certs[1:]))


def userinfo_statements(world: World, op: EntityId, token: TokenSet, now: int) -> tuple[AttributeStatement, ...]:
    """Statements behind ``token``. Reference tokens resolve to the snapshot
    taken when they were issued, which was already filtered for the audience."""
    verdict = verify_integrity(world.topology.anchors, token)
    if not verdict:
        raise UnverifiableInputError(verdict.reason)
    if token.issuer != op:
        raise UnknownReferenceError(f"token was issued by {token.issuer}, not {op}")
    if now > token.not_after:
        raise TokenExpiredError(f"token expired at {token.not_after}")
    if isinstance(token.access, ReferenceAccess):
        entry = world.references.get(token.access.ref)
        if entry is None or entry.issuer != op:
            raise UnknownReferenceError(f"unknown reference {token.access.ref!r}")
        statements = entry.statements
    else:
        statements = token.access.claims
    return tuple(s.with_delivery(Delivery.PULL) for s in statements)


def userinfo(world: World, op: EntityId, token: TokenSet, now: int) -> dict:
    """Claims map: ``sub`` plus one entry per released name (a list when multi-valued)."""
    claims: dict = {"sub": token.subject}
    for s in userinfo_statements(world, op, token, now):
        if s.name in claims:
            prev = claims[s.name]
            claims[s.name] = sorted((prev if isinstance(prev, list) else [prev]) + [s.value])
        else:
            claims[s.name] = s.value
    return claims


def manage_membership(world: World, aa: EntityId, admin: str, change: str, subject_key, payload) -> None:
    """Apply one membership change. ``payload`` is a group name, or a
    ``(group, role)`` pair / ``"group:role"`` string for role changes."""
    cfg = world.topology.attribute_authorities.get(aa)
    if cfg is None:
        raise WrongProviderKindError(f"{aa} is not an attribute authority")
    if admin not in cfg.admins:
        raise UnauthorizedAdminError(f"{admin!r} may not administer {aa}")
    if change not in MEMBERSHIP_CHANGES:
        raise ValueError(f"unknown membership change {change!r}")
    key = _record_key(subject_key)
    records = world.aa_records.setdefault(aa, {})
    record = records.get(key) or AARecord(subject_key=key)
    groups, roles = set(record.groups), set(record.roles)

    if change in ("add_role", "remove_role"):
        group, role = payload.split(":", 1) if isinstance(payload, str) else payload
        pair = (str(group), str(role))
        if change == "add_role":
            if pair[0] not in groups:
                raise MembershipError(f"group {pair[0]} not held")
            roles.add(pair)
        else:
            if pair not in roles:
                raise MembershipError(f"role {pair[0]}:{pair[1]} not held")
            roles.discard(pair)
    else:
        group = str(payload)
        if change == "add_group":
            groups.add(group)
        else:
            if group not in groups:
                raise MembershipError(f"group {group} not held")
            groups.discard(group)
            roles = {r for r in roles if r[0] != group}
    records[key] = dataclasses.replace(record, groups=frozenset(groups), roles=frozenset(roles))
