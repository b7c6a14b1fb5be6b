"""User Identities layer: SAML-like IdPs, OIDC-like OPs, CAs and guest/social
providers producing authentication results."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from .errors import (
    ClientMismatchError,
    CodeExpiredError,
    CodeRedeemedError,
    DuplicateRegistrationError,
    LifetimeRangeError,
    UnknownCodeError,
    UnknownRelyingPartyError,
    UnknownUserError,
    WrongProviderKindError,
)
from .integrity import sign
from .model import (
    Assertion,
    AttributeStatement,
    CertChain,
    Delivery,
    EntityId,
    LinkedIdentity,
    LoA,
    PrincipalRecord,
    ReferenceAccess,
    SelfContainedAccess,
    Tech,
    TokenSet,
    normalize_name,
    sort_statements,
)
from .topology import GUEST_KINDS, Kind, trusts
from .translation import end_entity_chain
from .world import AuthCode, ReferenceEntry, StoredUser, World

MIN_CERT_LIFETIME = 864000      # 10 days
MAX_CERT_LIFETIME = 63072000    # 2 years


@dataclass(frozen=True)
class AuthnRequest:
    requester: EntityId
    audience: EntityId
    wanted_attributes: frozenset[str] = frozenset()
    binding: str = "redirect"  # redirect | back-channel


def _principal(world: World, user: PrincipalRecord | str) -> PrincipalRecord:
    if isinstance(user, PrincipalRecord):
        return world.principals.get(user.handle, user)
    return world.principal(user)


def _stored_user(world: World, provider: EntityId, user: PrincipalRecord | str) -> StoredUser:
    rec = _principal(world, user)
    subject = rec.subject_at(provider)
    store = world.users.get(provider, {})
    if subject is None or subject not in store:
        raise UnknownUserError(f"{rec.handle!r} has no identity at {provider}")
    return store[subject]


def _require_rp(world: World, provider: EntityId, requester: EntityId) -> None:
    world.topology.entity(requester)
    if not trusts(world.topology, provider, requester):
        raise UnknownRelyingPartyError(f"{provider} does not know {requester}")


def released_statements(world: World, provider: EntityId, stored: StoredUser,
                        audience: EntityId, delivery: Delivery) -> tuple[AttributeStatement, ...]:
    """Stored attributes of ``stored`` restricted by the (provider, audience) policy."""
    policy = world.topology.release_policy(provider, audience)
    loa = stored.loa_for(audience)
    return sort_statements(
        AttributeStatement(name, value, provider, loa, None, delivery)
        for name, value in stored.attributes if name in policy)


def authenticate_web(world: World, idp: EntityId, user: PrincipalRecord | str,
                     req: AuthnRequest, now: int, push: bool = True) -> Assertion:
    """With ``push=False`` the assertion carries no attributes; the relying
    party pulls them with :func:`attribute_query`."""
    t = world.topology
    ent = t.entity(idp)
    if Tech.SAML not in ent.protocols:
        raise WrongProviderKindError(f"{idp} does not issue assertions")
    stored = _stored_user(world, idp, user)
    _require_rp(world, idp, req.requester)
    attrs = released_statements(world, idp, stored, req.requester, Delivery.PUSH) if push else ()
    assertion = Assertion(
        subject=stored.subject, issuer=idp, audience=req.requester, attributes=attrs,
        auth_instant=now, not_before=now, not_after=now + t.lifetimes.assertion)
    return sign(t.anchors, assertion)


def attribute_query(world: World, idp: EntityId, subject: str, requester: EntityId) -> list[AttributeStatement]:
    """Back-channel attribute query answered by the identity provider itself."""
    _require_rp(world, idp, requester)
    stored = world.users.get(idp, {}).get(subject)
    if stored is None:
        return []
    return list(released_statements(world, idp, stored, requester, Delivery.PULL))


def authenticate_oidc(world: World, op: EntityId, user: PrincipalRecord | str, client: EntityId,
                      mode: str, now: int) -> AuthCode | TokenSet:
    """``mode`` is ``"code"`` (pull) or ``"self_contained"`` (push)."""
    t = world.topology
    ent = t.entity(op)
    if Tech.OIDC not in ent.protocols:
        raise WrongProviderKindError(f"{op} is not an OpenID provider")
    stored = _stored_user(world, op, user)
    _require_rp(world, op, client)
    if mode == "code":
        statements = released_statements(world, op, stored, client, Delivery.PULL)
        code = AuthCode(world.next_id("code"), op, stored.subject, client,
                        expires=now + t.lifetimes.code, statements=statements)
        world.codes[code.code] = code
        return dataclasses.replace(code)
    if mode != "self_contained":
        raise ValueError(f"unknown oidc mode {mode!r}")
    claims = released_statements(world, op, stored, client, Delivery.PUSH)
    token = TokenSet(
        subject=stored.subject, issuer=op, audience=client,
        id_claims=(("aud", client), ("iss", op), ("sub", stored.subject)),
        access=SelfContainedAccess(claims), not_after=now + t.lifetimes.token)
    return sign(t.anchors, token)


def redeem_code(world: World, op: EntityId, code: AuthCode | str, client: EntityId, now: int) -> TokenSet:
    key = code.code if isinstance(code, AuthCode) else code
    stored = world.codes.get(key)
    if stored is None or stored.op != op:
        raise UnknownCodeError(f"{op} never issued code {key!r}")
    if stored.client != client:
        raise ClientMismatchError(f"code issued to {stored.client}, presented by {client}")
    if stored.redeemed:
        raise CodeRedeemedError(f"code {key} already redeemed")
    if now > stored.expires:
        raise CodeExpiredError(f"code {key} expired at {stored.expires}")
    stored.redeemed = True
    t = world.topology
    not_after = now + t.lifetimes.token
    ref = world.next_id("ref")
    world.references[ref] = ReferenceEntry(op, stored.subject, client, not_after, stored.statements)
    token = TokenSet(
        subject=stored.subject, issuer=op, audience=client,
        id_claims=(("aud", client), ("iss", op), ("sub", stored.subject)),
        access=ReferenceAccess(ref), not_after=not_after)
    return sign(t.anchors, token)


def issue_certificate(world: World, ca: EntityId, user: PrincipalRecord | str,
                      lifetime_s: int, now: int) -> CertChain:
    if not MIN_CERT_LIFETIME <= lifetime_s <= MAX_CERT_LIFETIME:
        raise LifetimeRangeError(
            f"lifetime {lifetime_s}s outside [{MIN_CERT_LIFETIME}, {MAX_CERT_LIFETIME}]")
    if world.topology.kind(ca) != Kind.CA:
        raise WrongProviderKindError(f"{ca} is not a CA")
    stored = _stored_user(world, ca, user)
    return end_entity_chain(world.topology, ca, stored.subject, now, now + lifetime_s)


def register_guest(world: World, guest_idp: EntityId, profile: dict, now: int,
                   link_to: str | None = None) -> PrincipalRecord:
    """Self-service sign-up at a guest/social/eGov provider.

    ``profile`` holds ``subject`` (the chosen id), optionally ``handle``, and
    attribute name/value pairs. With ``link_to`` the new identity is linked to
    an existing principal instead of creating one.
    """
    ent = world.topology.entity(guest_idp)
    if ent.kind not in GUEST_KINDS:
        raise WrongProviderKindError(f"{guest_idp} is a {ent.kind.value}, not a guest provider")
    subject = str(profile["subject"])
    store = world.users.setdefault(guest_idp, {})
    if subject in store:
        raise DuplicateRegistrationError(f"{subject!r} already registered at {guest_idp}")
    if link_to is not None:
        rec = world.principal(link_to)
    else:
        handle = str(profile.get("handle") or f"{guest_idp}#{subject}")
        if handle in world.principals:
            raise DuplicateRegistrationError(f"principal {handle!r} exists")
        rec = PrincipalRecord(handle)
    attrs = []
    for name, value in profile.items():
        if name in ("subject", "handle"):
            continue
        for v in value if isinstance(value, (list, tuple)) else [value]:
            attrs.append((normalize_name(str(name)), str(v)))
    loa = LoA.SUBSTANTIAL if ent.flavor == "egov" else LoA.LOW
    store[subject] = StoredUser(rec.handle, subject, tuple(sorted(attrs)), loa)
    rec = dataclasses.replace(
        rec, linked_identities=rec.linked_identities + (LinkedIdentity(guest_idp, subject, ent.flavor or "guest"),))
    world.principals[rec.handle] = rec
    return rec


def raise_loa(world: World, provider: EntityId, handle: str, audience: EntityId, loa: LoA) -> None:
    """Administrative vetting event: statements released to ``audience`` by
    ``provider`` about ``handle`` carry at least ``loa`` from now on."""
    stored = _stored_user(world, provider, handle)
    current = stored.audience_loa.get(audience, stored.loa)
    stored.audience_loa[audience] = max(current, loa)
