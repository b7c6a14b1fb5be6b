"""Keyed integrity tags standing in for signatures.

A tag is HMAC-SHA256 under the issuer's registered key over the canonical
serialization of the object. Proxy certificates are tagged under a key derived
from their parent certificate's tag, so only a holder of the parent can
delegate.
"""

from __future__ import annotations

import dataclasses
import hashlib
import hmac
from dataclasses import dataclass
from typing import Iterator, Mapping

from .errors import UnknownIssuerKeyError
from .model import (
    Assertion,
    AttributeCertificate,
    Cert,
    CertChain,
    EntityId,
    IntegrityTag,
    SelfContainedAccess,
    TokenSet,
    canonical_serialize,
)

FINGERPRINT_LABEL = b"fedsim-fingerprint-v1"
PROXY_KEY_LABEL = b"fedsim-proxy-key-v1"


def derive_key(seed: str, entity: EntityId) -> bytes:
    return hashlib.sha256(f"fedsim-key|{seed}|{entity}".encode("utf-8")).digest()


def proxy_signing_key(parent_tag: IntegrityTag) -> bytes:
    return hashlib.sha256(PROXY_KEY_LABEL + parent_tag.tag).digest()


def keyed_tag(key: bytes, payload: bytes) -> bytes:
    return hmac.new(key, payload, hashlib.sha256).digest()


def fingerprint(key: bytes) -> str:
    return hmac.new(FINGERPRINT_LABEL, key, hashlib.sha256).hexdigest()


class KeyRegistry(Mapping[EntityId, bytes]):
    """Trust-anchor registry: issuer entity id -> signing key."""

    def __init__(self, keys: Mapping[EntityId, bytes] | None = None):
        self._keys = dict(keys or {})

    def __getitem__(self, issuer: EntityId) -> bytes:
        return self._keys[issuer]

    def __iter__(self) -> Iterator[EntityId]:
        return iter(sorted(self._keys))

    def __len__(self) -> int:
        return len(self._keys)

    def __eq__(self, other) -> bool:
        if isinstance(other, KeyRegistry):
            return self._keys == other._keys
        return NotImplemented

    def __repr__(self) -> str:
        return f"KeyRegistry({sorted(self._keys)})"

    def subset(self, issuers) -> KeyRegistry:
        return KeyRegistry({i: self._keys[i] for i in issuers if i in self._keys})

    def key_for(self, issuer: EntityId) -> bytes:
        try:
            return self._keys[issuer]
        except KeyError:
            raise UnknownIssuerKeyError(f"no key registered for {issuer!r}") from None


def mint_integrity_tag(anchors: KeyRegistry, issuer: EntityId, payload: bytes) -> IntegrityTag:
    return IntegrityTag(issuer, keyed_tag(anchors.key_for(issuer), payload))


@dataclass(frozen=True)
class Verdict:
    ok: bool
    reason: str | None = None

    def __bool__(self) -> bool:
        return self.ok


VALID = Verdict(True)


def _tag_matches(key: bytes, obj, tag: IntegrityTag | None) -> bool:
    if tag is None:
        return False
    return hmac.compare_digest(keyed_tag(key, canonical_serialize(obj)), tag.tag)


# -- signing helpers -----------------------------------------------------------

def sign(anchors: KeyRegistry, obj, issuer: EntityId | None = None):
    """Return ``obj`` with a freshly minted integrity tag.

    Self-contained token access parts are tagged before the enclosing token.
    """
    if isinstance(obj, TokenSet) and isinstance(obj.access, SelfContainedAccess):
        inner = dataclasses.replace(obj.access, integrity=None)
        inner = dataclasses.replace(
            inner, integrity=mint_integrity_tag(anchors, obj.issuer, canonical_serialize(inner)))
        obj = dataclasses.replace(obj, access=inner)
    if issuer is None:
        issuer = obj.issuer if not isinstance(obj, Cert) else obj.issuer_name
    tag = mint_integrity_tag(anchors, issuer, canonical_serialize(obj))
    return dataclasses.replace(obj, integrity=tag)


def sign_proxy_cert(cert: Cert, parent: Cert) -> Cert:
    key = proxy_signing_key(parent.integrity)
    tag = IntegrityTag(parent.subject_name, keyed_tag(key, canonical_serialize(cert)))
    return dataclasses.replace(cert, integrity=tag)


# -- verification --------------------------------------------------------------

def _verify_tagged(anchors: KeyRegistry, obj, issuer: EntityId) -> Verdict:
    tag = obj.integrity
    if tag is None:
        return Verdict(False, "missing tag")
    if tag.issuer != issuer:
        return Verdict(False, "tag issuer mismatch")
    if issuer not in anchors:
        return Verdict(False, "unknown issuer")
    if not _tag_matches(anchors[issuer], obj, tag):
        return Verdict(False, "tag mismatch")
    return VALID


def verify_chain_tags(anchors: KeyRegistry, chain: CertChain) -> Verdict:
    certs = chain.certs
    for i, cert in enumerate(certs):
        if cert.is_proxy:
            if i + 1 >= len(certs) or certs[i + 1].integrity is None or cert.integrity is None:
                return Verdict(False, "tag mismatch")
            if not _tag_matches(proxy_signing_key(certs[i + 1].integrity), cert, cert.integrity):
                return Verdict(False, "tag mismatch")
        else:
            verdict = _verify_tagged(anchors, cert, cert.issuer_name)
            if not verdict:
                return verdict
        if cert.attr_cert is not None:
            verdict = _verify_tagged(anchors, cert.attr_cert, cert.attr_cert.issuer)
            if not verdict:
                return verdict
    return VALID


def verify_integrity(anchors: KeyRegistry, credential) -> Verdict:
    """Check that ``credential`` was issued by its stated issuer and not modified."""
    if isinstance(credential, CertChain):
        if not credential.certs:
            return Verdict(False, "empty chain")
        return verify_chain_tags(anchors, credential)
    if isinstance(credential, AttributeCertificate):
        return _verify_tagged(anchors, credential, credential.issuer)
    if isinstance(credential, Cert):
        return _verify_tagged(anchors, credential, credential.issuer_name)
    if isinstance(credential, TokenSet) and isinstance(credential.access, SelfContainedAccess):
        inner = _verify_tagged(anchors, credential.access, credential.issuer)
        if not inner:
            return inner
    if isinstance(credential, (Assertion, TokenSet)):
        return _verify_tagged(anchors, credential, credential.issuer)
    raise TypeError(f"cannot verify {type(credential).__name__}")
