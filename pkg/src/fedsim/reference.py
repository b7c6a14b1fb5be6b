"""Reference topology covering every technology and aggregation layout.

Used by the conformance property (technology x delivery x mode on four SP
layouts) and by the ``check`` suites.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from .engine import FlowSpec
from .model import Tech
from .topology import Topology, load_topology

REFERENCE_TOPOLOGY = """\
format: fedsim-topology v1
name: reference
key_seed: reference
federations:
  - id: ref-fed
    model: full-mesh
    members: [idp:ref, op:ref, ca:ref, aa:ref, voms:ref, proxy:ref, tts:ref,
              sp:ref-direct, sp:ref-dariah, sp:ref-registry]
entities:
  - id: idp:ref
    kind: IdP
    users:
      - {handle: alice, subject: alice-idp, attributes: {affiliation: member, mail: alice@ref.example}}
  - id: op:ref
    kind: OP
    users:
      - {handle: alice, subject: alice-op, attributes: {affiliation: member, mail: alice@ref.example}}
  - id: ca:ref
    kind: CA
    users:
      - {handle: alice, subject: /CN=alice}
  - id: aa:ref
    kind: AA
    admins: [ref-admin]
    records:
      - {subject: {issuer: idp:ref, subject_id: alice-idp}, groups: [vo-ref], roles: [[vo-ref, member]]}
      - {subject: {issuer: op:ref, subject_id: alice-op}, groups: [vo-ref], roles: [[vo-ref, member]]}
      - {subject: {issuer: ca:ref, subject_id: /CN=alice}, groups: [vo-ref], roles: [[vo-ref, member]]}
  - id: voms:ref
    kind: VOMS
    records:
      - {subject: {issuer: ca:ref, subject_id: /CN=alice}, groups: [vo-ref], roles: [[vo-ref, member]]}
  - id: proxy:ref
    kind: Proxy
    protocols: [saml-like, oidc-like]
    scope: ref.example
    upstream_attributes: [affiliation, mail]
    aas: [aa:ref]
    translators: [tts:ref]
  - id: tts:ref
    kind: TTS
    ca_parent: proxy:ref
    routes:
      - {from: saml-like, to: x509-like, lifetime: 43200}
  - id: sp:ref-direct
    kind: SP
    protocols: [saml-like, oidc-like, x509-like]
    aas: [aa:ref]
    voms: {id: voms:ref, vo: vo-ref, roles: [member]}
    local_accounts: true
    auto_provision: true
    privilege_map: {vo-ref: ref-users}
    policy: &policy
      rules:
        - require: {affiliation: member}
        - require: {group: vo-ref}
  - id: sp:ref-dariah
    kind: SP
    protocols: [saml-like, oidc-like, x509-like]
    aggregation: sp
    registry: sp:ref-registry
    voms: {id: voms:ref, vo: vo-ref}
    local_accounts: true
    auto_provision: true
    policy: *policy
  - id: sp:ref-registry
    kind: SP
    scope: registry.ref.example
    aas: [aa:ref]
  - id: sp:ref-internal
    kind: SP
    internal_behind: proxy:ref
    trusted: [proxy:ref]
    protocols: [saml-like, oidc-like, x509-like]
    voms: {id: voms:ref, vo: vo-ref}
    local_accounts: true
    auto_provision: true
    policy: *policy
  - id: sp:ref-x509
    kind: SP
    internal_behind: proxy:ref
    trusted: [proxy:ref]
    protocols: [x509-like]
    voms: {id: voms:ref, vo: vo-ref}
    local_accounts: true
    auto_provision: true
    policy: *policy
policies:
  - {issuer: idp:ref, audience: sp:ref-direct, release: [affiliation, mail]}
  - {issuer: idp:ref, audience: sp:ref-dariah, release: [affiliation, mail]}
  - {issuer: idp:ref, audience: proxy:ref, release: [affiliation, mail]}
  - {issuer: op:ref, audience: sp:ref-direct, release: [affiliation, mail]}
  - {issuer: op:ref, audience: sp:ref-dariah, release: [affiliation, mail]}
  - {issuer: op:ref, audience: proxy:ref, release: [affiliation, mail]}
  - {issuer: aa:ref, audience: sp:ref-direct, release: [group, role]}
  - {issuer: aa:ref, audience: sp:ref-registry, release: [group, role]}
  - {issuer: aa:ref, audience: proxy:ref, release: [group, role]}
  - {issuer: proxy:ref, audience: sp:ref-internal, release: [unique-id, affiliation, group, role]}
  - {issuer: proxy:ref, audience: sp:ref-x509, release: [unique-id, affiliation, group, role]}
"""

VARIANTS = {
    "direct": "sp:ref-direct",
    "sp-aggregation": "sp:ref-dariah",
    "proxied": "sp:ref-internal",
    "proxied-translated": "sp:ref-x509",
}
PROVIDERS = {Tech.SAML: "idp:ref", Tech.OIDC: "op:ref", Tech.X509: "ca:ref"}


@dataclass(frozen=True)
class ReferenceCase:
    variant: str
    spec: FlowSpec

    @property
    def label(self) -> str:
        s = self.spec
        return f"{self.variant}/{s.tech.value}/{s.attr_mode}/{s.mode}"


def reference_topology() -> Topology:
    return load_topology(REFERENCE_TOPOLOGY)


def reference_cases() -> list[ReferenceCase]:
    cases = []
    for variant, tech, attr_mode, mode in itertools.product(
            VARIANTS, list(Tech), ("push", "pull"), ("web", "non-web")):
        cases.append(ReferenceCase(variant, FlowSpec(
            user="alice", target_sp=VARIANTS[variant], tech=tech, provider=PROVIDERS[tech],
            mode=mode, attr_mode=attr_mode)))
    return cases
