"""Translation layer: credential translation between technologies, proxy
certificate delegation and validation, and local-account provisioning for
non-web access."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from .errors import (
    DepthExhaustedError,
    InputExpiredError,
    LocalAccountsDisabledError,
    NameReuseError,
    NoActiveAccountError,
    NoRouteError,
    UnverifiableInputError,
    WindowError,
)
from .integrity import KeyRegistry, Verdict, sign, sign_proxy_cert, verify_chain_tags, verify_integrity
from .model import (
    Assertion,
    AttributeCertificate,
    AttributeStatement,
    Cert,
    CertChain,
    CompositeIdentity,
    Delivery,
    EntityId,
    ReferenceAccess,
    ScopedId,
    SelfContainedAccess,
    Tech,
    TokenSet,
    embedded_statements,
    not_after_of,
    tech_of,
)
from .topology import Topology, TranslationRoute
from .world import LocalAccount, ReferenceEntry, World

AUTHORITY_WINDOW = (0, 2 ** 40)

__all__ = [
    "TranslationRoute", "ChainVerdict", "translate", "create_proxy_cert", "validate_chain",
    "delegate_token", "provision_local", "deprovision_local", "account_name_for",
]


# -- certificate construction --------------------------------------------------

def authority_certs(t: Topology, issuer: EntityId) -> list[Cert]:
    """Certificates from ``issuer`` up to its self-signed root.

    A translator configured with ``ca_parent`` is certified by that parent, so
    relying parties that only trust the parent still accept its output.
    """
    certs = []
    current = issuer
    seen = set()
    while current not in seen:
        seen.add(current)
        cfg = t.translators.get(current)
        parent = cfg.ca_parent if cfg else None
        nb, na = AUTHORITY_WINDOW
        if parent is None:
            certs.append(sign(t.anchors, Cert(current, current, nb, na)))
            return certs
        certs.append(sign(t.anchors, Cert(current, parent, nb, na)))
        current = parent
    raise ValueError(f"ca_parent cycle at {issuer}")


def end_entity_chain(t: Topology, issuer: EntityId, subject: str, not_before: int, not_after: int,
                     attr_cert: AttributeCertificate | None = None) -> CertChain:
    ee = Cert(subject, issuer, not_before, not_after, False, t.lifetimes.default_depth, attr_cert)
    return CertChain((sign(t.anchors, ee), *authority_certs(t, issuer)))


def create_proxy_cert(parent: CertChain, delegatee: str, requested_lifetime_s: int, now: int,
                      clamp: bool = True) -> CertChain:
    """Delegate ``parent`` by appending a new proxy certificate as leaf."""
    leaf = parent.leaf
    if leaf.remaining_delegation_depth < 1:
        raise DepthExhaustedError(f"{leaf.subject_name} cannot delegate further")
    not_before = max(now, leaf.not_before)
    not_after = now + requested_lifetime_s
    if clamp:
        not_after = min(not_after, leaf.not_after)
    elif not_after > leaf.not_after or now < leaf.not_before:
        raise WindowError("requested window outside parent window")
    if not_before >= not_after:
        raise WindowError("no time left in parent window")
    cert = Cert(
        subject_name=f"{leaf.subject_name}/CN={delegatee}",
        issuer_name=leaf.subject_name,
        not_before=not_before,
        not_after=not_after,
        is_proxy=True,
        remaining_delegation_depth=leaf.remaining_delegation_depth - 1,
        attr_cert=leaf.attr_cert,
    )
    return CertChain((sign_proxy_cert(cert, leaf), *parent.certs))


# -- chain validation ----------------------------------------------------------

@dataclass(frozen=True)
class ChainVerdict:
    ok: bool
    reason: str | None = None
    subject: str | None = None
    attrs: tuple[AttributeStatement, ...] = ()

    def __bool__(self) -> bool:
        return self.ok


def _invalid(reason: str) -> ChainVerdict:
    return ChainVerdict(False, reason)


def validate_chain(anchors: KeyRegistry, chain: CertChain, now: int) -> ChainVerdict:
    """Validate a leaf-first chain; on failure the reason names the first failing rule."""
    certs = chain.certs
    if len(certs) < 2:
        return _invalid("empty chain")
    ee_index = next((i for i, c in enumerate(certs) if not c.is_proxy), None)
    if ee_index is None or ee_index > len(certs) - 2 or any(c.is_proxy for c in certs[ee_index:]):
        return _invalid("bad structure")
    for child, parent in zip(certs, certs[1:]):
        if child.issuer_name != parent.subject_name:
            return _invalid("linkage broken")
    if certs[-1].issuer_name != certs[-1].subject_name:
        return _invalid("linkage broken")
    if certs[-1].subject_name not in anchors:
        return _invalid("not anchored")
    if not verify_chain_tags(anchors, chain):
        return _invalid("tag mismatch")
    if any(not c.not_before <= now <= c.not_after for c in certs):
        return _invalid("outside validity window")
    for i in range(ee_index):
        child, parent = certs[i], certs[i + 1]
        if child.not_before < parent.not_before or child.not_after > parent.not_after:
            return _invalid("window not nested")
    for i in range(ee_index):
        if certs[i].remaining_delegation_depth >= certs[i + 1].remaining_delegation_depth:
            return _invalid("depth not decreasing")
    subject = certs[ee_index].subject_name
    for c in certs:
        ac = c.attr_cert
        if ac is not None and (ac.holder != subject or not ac.not_before <= now <= ac.not_after):
            return _invalid("attribute certificate invalid")
    return ChainVerdict(True, None, subject, embedded_statements(chain))


# -- translation -----------------------------------------------------------------

def _statements_of(world: World, credential) -> tuple[AttributeStatement, ...]:
    if isinstance(credential, TokenSet) and isinstance(credential.access, ReferenceAccess):
        entry = world.references.get(credential.access.ref)
        if entry is None or entry.issuer != credential.issuer:
            raise UnverifiableInputError("unresolvable reference token")
        return entry.statements
    return embedded_statements(credential)


def check_credential(world: World, credential, now: int) -> Verdict:
    """Integrity plus validity-window check for any credential."""
    if isinstance(credential, CertChain):
        v = validate_chain(world.topology.anchors, credential, now)
        return Verdict(v.ok, v.reason)
    verdict = verify_integrity(world.topology.anchors, credential)
    if not verdict:
        return verdict
    if now > credential.not_after:
        return Verdict(False, "expired")
    if isinstance(credential, Assertion) and now < credential.not_before:
        return Verdict(False, "not yet valid")
    return verdict


def translate(world: World, tts: EntityId, credential, to_tech: Tech, now: int,
              audience: EntityId | None = None):
    """Re-issue ``credential`` in ``to_tech`` under ``tts``, preserving subject
    and statements; the output never outlives the input."""
    t = world.topology
    t.entity(tts)
    from_tech = tech_of(credential)
    route = t.route(tts, from_tech, to_tech)
    if route is None:
        raise NoRouteError(f"{tts} has no route {from_tech.value} -> {to_tech.value}")
    input_not_after = not_after_of(credential)
    if now >= input_not_after:
        raise InputExpiredError(f"input expired at {input_not_after}")
    verdict = check_credential(world, credential, now)
    if not verdict:
        raise UnverifiableInputError(verdict.reason)
    statements = _statements_of(world, credential)
    not_after = now + min(route.lifetime_s, input_not_after - now)
    subject = credential.subject
    if audience is None:
        audience = getattr(credential, "audience", tts)

    if to_tech == Tech.SAML:
        out = [s.with_delivery(Delivery.PUSH) for s in statements]
        auth_instant = credential.auth_instant if isinstance(credential, Assertion) else now
        return sign(t.anchors, Assertion(subject, tts, audience, out, auth_instant, now, not_after))
    if to_tech == Tech.OIDC:
        acting = credential.acting_parties if isinstance(credential, TokenSet) else ()
        id_claims = (("aud", audience), ("iss", tts), ("sub", subject))
        if route.reference:
            out = tuple(s.with_delivery(Delivery.PULL) for s in statements)
            ref = world.next_id("ref")
            world.references[ref] = ReferenceEntry(tts, subject, audience, not_after, out)
            access = ReferenceAccess(ref)
        else:
            access = SelfContainedAccess(tuple(s.with_delivery(Delivery.PUSH) for s in statements))
        return sign(t.anchors, TokenSet(subject, tts, audience, id_claims, access, not_after, acting))
    out = tuple(s.with_delivery(Delivery.PUSH) for s in statements)
    ac = None
    if out:
        ac = sign(t.anchors, AttributeCertificate(subject, tts, out, now, not_after))
    return end_entity_chain(t, tts, subject, now, not_after, ac)


def delegate_token(world: World, tts: EntityId, token: TokenSet, actor: str, now: int) -> TokenSet:
    """OAuth-style multi-tier delegation: append ``actor`` to the acting-party
    chain, capped at the default delegation depth."""
    t = world.topology
    if len(token.acting_parties) >= t.lifetimes.default_depth:
        raise DepthExhaustedError("acting-party chain exhausted")
    if now >= token.not_after:
        raise InputExpiredError("token expired")
    verdict = check_credential(world, token, now)
    if not verdict:
        raise UnverifiableInputError(verdict.reason)
    statements = _statements_of(world, token)
    not_after = min(token.not_after, now + t.lifetimes.token)
    out = TokenSet(token.subject, tts, token.audience, token.id_claims,
                   SelfContainedAccess(statements), not_after, token.acting_parties + (actor,))
    return sign(t.anchors, out)


# -- local accounts ------------------------------------------------------------

def account_name_for(scoped: ScopedId) -> str:
    return "u" + scoped.local_part[:12]


def privileges_for(world: World, sp: EntityId, statements) -> frozenset[str]:
    pmap = dict(world.topology.sps[sp].privilege_map)
    return frozenset(pmap[s.value] for s in statements
                     if s.name in ("group", "role") and s.value in pmap)


def _rebind_account(world: World, sp: EntityId, name: str, owner: str | None) -> None:
    """Record (sp, name) on principal ``owner`` only (or nobody)."""
    for handle, rec in list(world.principals.items()):
        accounts = tuple(a for a in rec.local_accounts
                         if a != (sp, name) and not (handle == owner and a[0] == sp))
        if handle == owner:
            accounts += ((sp, name),)
        if accounts != rec.local_accounts:
            world.principals[handle] = dataclasses.replace(rec, local_accounts=accounts)


def provision_local(world: World, sp: EntityId, cid: CompositeIdentity,
                    handle: str | None = None) -> LocalAccount:
    """Create or reactivate the account for ``cid``; ``handle`` names the
    principal to record it on."""
    cfg = world.topology.sps.get(sp)
    if cfg is None or not cfg.local_accounts:
        raise LocalAccountsDisabledError(f"{sp} does not use local accounts")
    scoped = cid.persistent_unique_id
    name = account_name_for(scoped)
    table = world.accounts.setdefault(sp, {})
    privileges = privileges_for(world, sp, cid.statements)
    existing = table.get(name)
    if existing is not None and existing.mapped_from != scoped:
        raise NameReuseError(f"name reuse refused: {name} at {sp} belongs to {existing.mapped_from}")
    if existing is None:
        existing = table[name] = LocalAccount(sp, name, scoped, privileges)
    else:
        existing.state = "active"
        existing.privileges = privileges
    if handle is None:
        handle = next((h for h, r in world.principals.items() if r.persistent_unique_id == scoped), None)
    if handle is not None:
        _rebind_account(world, sp, name, handle)
    return dataclasses.replace(existing)


def deprovision_local(world: World, sp: EntityId, scoped: ScopedId) -> None:
    account = active_account(world, sp, scoped)
    if account is None:
        raise NoActiveAccountError(f"no active account for {scoped} at {sp}")
    account.state = "deprovisioned"
    _rebind_account(world, sp, account.account_name, None)


def active_account(world: World, sp: EntityId, scoped: ScopedId) -> LocalAccount | None:
    account = world.accounts.get(sp, {}).get(account_name_for(scoped))
    if account is None or account.mapped_from != scoped or account.state != "active":
        return None
    return account


def has_account_record(world: World, sp: EntityId, scoped: ScopedId) -> bool:
    return account_name_for(scoped) in world.accounts.get(sp, {})
