"""Mutable simulation state for one scenario run.

Everything that changes while flows execute lives here: provider user stores
(guest sign-ups, vetting), auth-code and reference-token tables, AA records,
identifier registries, local accounts and the logical clock. The flow engine
is the only writer; a World is never shared between runs.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field
from typing import Any

from .errors import UnknownUserError
from .model import AttributeStatement, EntityId, LoA, PrincipalRecord, ScopedId
from .topology import AARecord, Topology, UserEntry


@dataclass
class StoredUser:
    handle: str
    subject: str
    attributes: tuple[tuple[str, str], ...]
    loa: LoA
    audience_loa: dict[EntityId, LoA] = field(default_factory=dict)  # raised by vetting

    def loa_for(self, audience: EntityId) -> LoA:
        return max(self.loa, self.audience_loa.get(audience, self.loa))


@dataclass
class AuthCode:
    code: str
    op: EntityId
    subject: str
    client: EntityId
    expires: int
    redeemed: bool = False
    statements: tuple[AttributeStatement, ...] = ()


@dataclass(frozen=True)
class ReferenceEntry:
    issuer: EntityId
    subject: str
    audience: EntityId
    not_after: int
    statements: tuple[AttributeStatement, ...]


@dataclass
class LocalAccount:
    sp: EntityId
    account_name: str
    mapped_from: ScopedId
    privileges: frozenset[str]
    state: str = "active"  # active | deprovisioned


@dataclass
class World:
    topology: Topology
    seed: int = 0
    clock: int = 0
    users: dict[EntityId, dict[str, StoredUser]] = field(default_factory=dict)
    principals: dict[str, PrincipalRecord] = field(default_factory=dict)
    codes: dict[str, AuthCode] = field(default_factory=dict)
    references: dict[str, ReferenceEntry] = field(default_factory=dict)
    aa_records: dict[EntityId, dict[Any, AARecord]] = field(default_factory=dict)
    registries: dict[EntityId, Any] = field(default_factory=dict)
    accounts: dict[EntityId, dict[str, LocalAccount]] = field(default_factory=dict)
    counter: int = 0

    @classmethod
    def create(cls, topology: Topology, seed: int = 0, clock: int = 0) -> World:
        w = cls(topology=topology, seed=seed, clock=clock)
        for provider, entries in topology.users.items():
            default = topology.entities[provider].loa
            store = w.users.setdefault(provider, {})
            for u in entries:
                store[u.subject] = StoredUser(u.handle, u.subject, u.attributes, u.loa or default)
                w._add_home_identity(u, provider)
        for aa, cfg in topology.attribute_authorities.items():
            w.aa_records[aa] = {r.subject_key: r for r in cfg.records}
        return w

    def _add_home_identity(self, u: UserEntry, provider: EntityId) -> None:
        rec = self.principals.get(u.handle) or PrincipalRecord(u.handle)
        if (provider, u.subject) not in rec.home_identities:
            rec = dataclasses.replace(rec, home_identities=rec.home_identities + ((provider, u.subject),))
        self.principals[u.handle] = rec

    def principal(self, handle: str) -> PrincipalRecord:
        try:
            return self.principals[handle]
        except KeyError:
            raise UnknownUserError(f"unknown principal {handle!r}") from None

    def principal_by_identity(self, provider: EntityId, subject: str) -> PrincipalRecord | None:
        for rec in self.principals.values():
            if (provider, subject) in rec.identity_keys():
                return rec
        return None

    def next_id(self, label: str) -> str:
        """Deterministic opaque identifier (codes, reference tokens)."""
        self.counter += 1
        digest = hashlib.sha256(f"{self.seed}|{label}|{self.counter}".encode()).hexdigest()
        return f"{label}-{digest[:16]}"

    def registry(self, owner: EntityId):
        from .proxy import IdRegistry  # proxy imports world
        return self.registries.setdefault(owner, IdRegistry())
