"""Shared domain vocabulary: assurance levels, attribute statements,
credentials for the three technology idioms, principals and scoped ids.

All values here are frozen dataclasses; "mutation" means building a new
value with :func:`dataclasses.replace`.
"""

from __future__ import annotations

import dataclasses
import re
import struct
from dataclasses import dataclass
from enum import Enum, IntEnum
from typing import Iterable, Union

EntityId = str

CANONICAL_NAMES = frozenset(
    {"unique-id", "display-name", "mail", "affiliation", "group", "role", "loa", "scope"}
)
RAW_PREFIX = "raw:"


class LoA(IntEnum):
    LOW = 1
    SUBSTANTIAL = 2
    HIGH = 3

    def __str__(self) -> str:
        return self.name.lower()

    @classmethod
    def parse(cls, text: str | LoA) -> LoA:
        if isinstance(text, LoA):
            return text
        try:
            return cls[str(text).upper()]
        except KeyError:
            raise ValueError(f"unknown LoA level {text!r}") from None


class Delivery(str, Enum):
    PUSH = "push"
    PULL = "pull"


class Tech(str, Enum):
    SAML = "saml-like"
    OIDC = "oidc-like"
    X509 = "x509-like"


def loa_combine(levels: Iterable[LoA]) -> LoA:
    """Combine assurance levels conservatively: the weakest one wins."""
    levels = list(levels)
    if not levels:
        raise ValueError("loa_combine needs at least one level")
    return min(levels)


def is_canonical(name: str) -> bool:
    return name in CANONICAL_NAMES


def normalize_name(name: str) -> str:
    """Canonical names pass through; anything else is marked ``raw:``."""
    if name in CANONICAL_NAMES or name.startswith(RAW_PREFIX):
        return name
    return RAW_PREFIX + name


@dataclass(frozen=True)
class IntegrityTag:
    issuer: EntityId
    tag: bytes


@dataclass(frozen=True)
class AttributeStatement:
    name: str
    value: str
    issuer: EntityId
    loa: LoA = LoA.LOW
    scope: str | None = None
    delivery: Delivery = Delivery.PUSH

    def __post_init__(self):
        if not (self.name in CANONICAL_NAMES
                or (self.name.startswith(RAW_PREFIX) and len(self.name) > len(RAW_PREFIX))):
            raise ValueError(f"attribute name {self.name!r} is neither canonical nor raw:-prefixed")
        if not self.issuer:
            raise ValueError("attribute statement needs an issuer")

    def sort_key(self):
        return (self.name, self.issuer, self.value, int(self.loa), self.scope or "", self.delivery.value)

    def with_delivery(self, delivery: Delivery) -> AttributeStatement:
        return dataclasses.replace(self, delivery=delivery)


def sort_statements(statements: Iterable[AttributeStatement]) -> tuple[AttributeStatement, ...]:
    return tuple(sorted(statements, key=AttributeStatement.sort_key))


_HEX32 = re.compile(r"^[0-9a-f]{32}$")


@dataclass(frozen=True, order=True)
class ScopedId:
    local_part: str
    scope: str

    def __post_init__(self):
        if not _HEX32.match(self.local_part):
            raise ValueError(f"scoped id local part must be 32 lowercase hex chars: {self.local_part!r}")
        if not self.scope:
            raise ValueError("scoped id needs a scope")

    def __str__(self) -> str:
        return f"{self.local_part}@{self.scope}"

    @classmethod
    def parse(cls, text: str) -> ScopedId:
        local, sep, scope = text.partition("@")
        if not sep:
            raise ValueError(f"not a scoped id: {text!r}")
        return cls(local, scope)


# -- credentials --------------------------------------------------------------

def _check_window(not_before: int, not_after: int) -> None:
    if not not_before < not_after:
        raise ValueError(f"empty validity window [{not_before}, {not_after}]")


@dataclass(frozen=True)
class Assertion:
    subject: str
    issuer: EntityId
    audience: EntityId
    attributes: tuple[AttributeStatement, ...]
    auth_instant: int
    not_before: int
    not_after: int
    integrity: IntegrityTag | None = None

    def __post_init__(self):
        object.__setattr__(self, "attributes", tuple(self.attributes))
        _check_window(self.not_before, self.not_after)


@dataclass(frozen=True)
class SelfContainedAccess:
    claims: tuple[AttributeStatement, ...]
    integrity: IntegrityTag | None = None

    def __post_init__(self):
        object.__setattr__(self, "claims", tuple(self.claims))


@dataclass(frozen=True)
class ReferenceAccess:
    ref: str


@dataclass(frozen=True)
class TokenSet:
    subject: str
    issuer: EntityId
    audience: EntityId
    id_claims: tuple[tuple[str, str], ...]
    access: Union[SelfContainedAccess, ReferenceAccess]
    not_after: int
    acting_parties: tuple[str, ...] = ()
    integrity: IntegrityTag | None = None

    def __post_init__(self):
        object.__setattr__(self, "id_claims", tuple(sorted(tuple(p) for p in self.id_claims)))
        object.__setattr__(self, "acting_parties", tuple(self.acting_parties))

    @property
    def self_contained(self) -> bool:
        return isinstance(self.access, SelfContainedAccess)


@dataclass(frozen=True)
class AttributeCertificate:
    """VOMS-style attribute extension bound to a certificate holder."""

    holder: str
    issuer: EntityId
    statements: tuple[AttributeStatement, ...]
    not_before: int
    not_after: int
    integrity: IntegrityTag | None = None

    def __post_init__(self):
        object.__setattr__(self, "statements", tuple(self.statements))
        _check_window(self.not_before, self.not_after)


@dataclass(frozen=True)
class Cert:
    subject_name: str
    issuer_name: str
    not_before: int
    not_after: int
    is_proxy: bool = False
    remaining_delegation_depth: int = 0
    attr_cert: AttributeCertificate | None = None
    integrity: IntegrityTag | None = None

    def __post_init__(self):
        _check_window(self.not_before, self.not_after)
        if self.remaining_delegation_depth < 0:
            raise ValueError("remaining_delegation_depth must be >= 0")

    @property
    def attr_extension(self) -> tuple[AttributeStatement, ...]:
        return self.attr_cert.statements if self.attr_cert else ()


@dataclass(frozen=True)
class CertChain:
    """Certificates ordered leaf first, trust anchor last."""

    certs: tuple[Cert, ...]

    def __post_init__(self):
        object.__setattr__(self, "certs", tuple(self.certs))

    @property
    def leaf(self) -> Cert:
        return self.certs[0]

    @property
    def root(self) -> Cert:
        return self.certs[-1]

    @property
    def end_entity(self) -> Cert:
        for cert in self.certs:
            if not cert.is_proxy:
                return cert
        return self.certs[-1]

    @property
    def subject(self) -> str:
        return self.end_entity.subject_name


Credential = Union[Assertion, TokenSet, CertChain]


def tech_of(credential: Credential) -> Tech:
    if isinstance(credential, Assertion):
        return Tech.SAML
    if isinstance(credential, TokenSet):
        return Tech.OIDC
    if isinstance(credential, CertChain):
        return Tech.X509
    raise TypeError(f"not a credential: {type(credential).__name__}")


def subject_of(credential: Credential) -> str:
    return credential.subject


def not_after_of(credential: Credential) -> int:
    if isinstance(credential, CertChain):
        return min(c.not_after for c in credential.certs)
    return credential.not_after


def issuer_of(credential: Credential) -> EntityId:
    """The entity whose key vouches for the credential as a whole."""
    if isinstance(credential, CertChain):
        return credential.root.subject_name
    return credential.issuer


def embedded_statements(credential: Credential) -> tuple[AttributeStatement, ...]:
    """Statements carried inside the credential itself (push delivery)."""
    if isinstance(credential, Assertion):
        return credential.attributes
    if isinstance(credential, TokenSet):
        return credential.access.claims if credential.self_contained else ()
    seen: dict = {}
    for cert in credential.certs:
        for st in cert.attr_extension:
            seen.setdefault(st, None)
    return sort_statements(seen)


# -- principals ---------------------------------------------------------------

@dataclass(frozen=True)
class LinkedIdentity:
    provider: EntityId
    subject_id: str
    kind: str  # guest | social | egov


@dataclass(frozen=True)
class PrincipalRecord:
    handle: str
    home_identities: tuple[tuple[EntityId, str], ...] = ()
    linked_identities: tuple[LinkedIdentity, ...] = ()
    persistent_unique_id: ScopedId | None = None
    local_accounts: tuple[tuple[EntityId, str], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "home_identities", tuple(tuple(p) for p in self.home_identities))
        object.__setattr__(self, "linked_identities", tuple(self.linked_identities))
        object.__setattr__(self, "local_accounts", tuple(tuple(p) for p in self.local_accounts))
        keys = self.identity_keys()
        if len(set(keys)) != len(keys):
            raise ValueError(f"duplicate identity in principal {self.handle!r}")
        sps = [sp for sp, _ in self.local_accounts]
        if len(set(sps)) != len(sps):
            raise ValueError(f"principal {self.handle!r} has two accounts at one SP")

    def identity_keys(self) -> list[tuple[EntityId, str]]:
        return list(self.home_identities) + [(l.provider, l.subject_id) for l in self.linked_identities]

    def subject_at(self, provider: EntityId) -> str | None:
        for idp, subject in self.identity_keys():
            if idp == provider:
                return subject
        return None


# -- canonical serialization ---------------------------------------------------
#
# Layout (all integers big-endian):
#   none   b"N"
#   bool   b"B" + 1 byte (0/1)
#   int    b"I" + signed 64-bit
#   str    b"S" + u32 byte length + UTF-8
#   bytes  b"Y" + u32 length + raw
#   list   b"L" + u32 count + items
#   record b"R" + str(type name) + u32 field count + (str(field name) + value)*
#          fields sorted by name; the top-level record omits "integrity".
# Enums encode as their string form. Lists of AttributeStatement are sorted by
# (name, issuer, value, ...) before encoding; frozensets are sorted.

def _enc_str(text: str) -> bytes:
    raw = text.encode("utf-8")
    return b"S" + struct.pack(">I", len(raw)) + raw


def _encode(value, out: list[bytes], skip_integrity: bool = False) -> None:
    if value is None:
        out.append(b"N")
    elif isinstance(value, bool):
        out.append(b"B" + (b"\x01" if value else b"\x00"))
    elif isinstance(value, LoA):
        out.append(_enc_str(str(value)))
    elif isinstance(value, Enum):
        out.append(_enc_str(value.value))
    elif isinstance(value, int):
        out.append(b"I" + struct.pack(">q", value))
    elif isinstance(value, str):
        out.append(_enc_str(value))
    elif isinstance(value, bytes):
        out.append(b"Y" + struct.pack(">I", len(value)) + value)
    elif isinstance(value, (tuple, list, frozenset, set)):
        items = list(value)
        if isinstance(value, (frozenset, set)):
            items = sorted(items)
        elif items and all(isinstance(i, AttributeStatement) for i in items):
            items = sorted(items, key=AttributeStatement.sort_key)
        out.append(b"L" + struct.pack(">I", len(items)))
        for item in items:
            _encode(item, out)
    elif dataclasses.is_dataclass(value):
        names = sorted(f.name for f in dataclasses.fields(value)
                       if not (skip_integrity and f.name == "integrity"))
        out.append(b"R" + _enc_str(type(value).__name__) + struct.pack(">I", len(names)))
        for name in names:
            out.append(_enc_str(name))
            _encode(getattr(value, name), out)
    else:
        raise TypeError(f"cannot serialize {type(value).__name__}")


def canonical_serialize(obj) -> bytes:
    """Deterministic bytes for a credential (or credential part), excluding
    the object's own integrity tag."""
    out: list[bytes] = []
    _encode(obj, out, skip_integrity=True)
    return b"".join(out)


@dataclass(frozen=True)
class CompositeIdentity:
    """Merged home + community statements keyed by the persistent identifier."""

    persistent_unique_id: ScopedId
    statements: tuple[AttributeStatement, ...]
    effective_loa: LoA
    source_log: tuple[tuple[EntityId, int], ...] = ()
    skipped: tuple[EntityId, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "statements", sort_statements(self.statements))
        ids = [s for s in self.statements if s.name == "unique-id"]
        if len(ids) != 1 or ids[0].value != str(self.persistent_unique_id):
            raise ValueError("composite identity needs exactly one matching unique-id statement")

    def values(self, name: str) -> list[str]:
        return [s.value for s in self.statements if s.name == name]
