"""Reference implementations used as test oracles.

They follow the documented formats and rules directly and share no code with
the package: HMAC is built from the raw hash, the serializer is rewritten from
the layout table, and the chain validator walks its rules one by one.
"""

from __future__ import annotations

import hashlib
from dataclasses import fields, is_dataclass
from enum import Enum

BLOCK = 64


def hmac_sha256(key: bytes, msg: bytes) -> bytes:
    if len(key) > BLOCK:
        key = hashlib.sha256(key).digest()
    key = key.ljust(BLOCK, b"\0")
    inner = hashlib.sha256(bytes(b ^ 0x36 for b in key) + msg).digest()
    return hashlib.sha256(bytes(b ^ 0x5C for b in key) + inner).digest()


def entity_key(seed: str, entity: str) -> bytes:
    return hashlib.sha256(("fedsim-key|" + seed + "|" + entity).encode()).digest()


def scoped_local_part(issuer: str, subject: str) -> str:
    return hashlib.sha256((issuer + "|" + subject).encode()).hexdigest()[:32]


def account_name(local_part: str) -> str:
    return "u" + local_part[:12]


# -- serializer ----------------------------------------------------------------

def _u32(n: int) -> bytes:
    return n.to_bytes(4, "big")


def _s(text: str) -> bytes:
    b = text.encode()
    return b"S" + _u32(len(b)) + b


def _statement_order(st):
    return (st.name, st.issuer, st.value, int(st.loa), st.scope or "", st.delivery.value)


def serialize(obj, top: bool = True) -> bytes:
    if obj is None:
        return b"N"
    if obj is True or obj is False:
        return b"B" + bytes([int(obj)])
    if isinstance(obj, Enum):
        # LoA is an IntEnum but is documented to encode by name
        return _s(obj.name.lower() if isinstance(obj.value, int) else obj.value)
    if isinstance(obj, int):
        return b"I" + obj.to_bytes(8, "big", signed=True)
    if isinstance(obj, str):
        return _s(obj)
    if isinstance(obj, bytes):
        return b"Y" + _u32(len(obj)) + obj
    if isinstance(obj, (frozenset, set)):
        items = sorted(obj)
        return b"L" + _u32(len(items)) + b"".join(serialize(i, False) for i in items)
    if isinstance(obj, (list, tuple)):
        items = list(obj)
        if items and all(type(i).__name__ == "AttributeStatement" for i in items):
            items.sort(key=_statement_order)
        return b"L" + _u32(len(items)) + b"".join(serialize(i, False) for i in items)
    if is_dataclass(obj):
        names = sorted(f.name for f in fields(obj) if not (top and f.name == "integrity"))
        body = b"".join(_s(n) + serialize(getattr(obj, n), False) for n in names)
        return b"R" + _s(type(obj).__name__) + _u32(len(names)) + body
    raise TypeError(type(obj))


# -- chain validator -----------------------------------------------------------

def validate_chain(keys: dict, chain, now: int, proxy_key) -> tuple[bool, str | None]:
    """Brute-force chain check returning (ok, first failing rule).

    ``proxy_key(parent_tag_bytes)`` gives the key for proxy certificates.
    """
    certs = list(chain.certs)
    if len(certs) < 2:
        return False, "empty chain"
    kinds = ["p" if c.is_proxy else "e" for c in certs]
    # shape: p* e (e)+ with at least one authority cert after the first e
    k = 0
    while k < len(kinds) and kinds[k] == "p":
        k += 1
    if k >= len(certs) - 1 or "p" in kinds[k:]:
        return False, "bad structure"
    for i in range(len(certs) - 1):
        if certs[i].issuer_name != certs[i + 1].subject_name:
            return False, "linkage broken"
    if certs[-1].issuer_name != certs[-1].subject_name:
        return False, "linkage broken"
    if certs[-1].subject_name not in keys:
        return False, "not anchored"
    for i, c in enumerate(certs):
        if c.integrity is None:
            return False, "tag mismatch"
        if c.is_proxy:
            key = proxy_key(certs[i + 1].integrity.tag)
        else:
            if c.integrity.issuer != c.issuer_name or c.issuer_name not in keys:
                return False, "tag mismatch"
            key = keys[c.issuer_name]
        if hmac_sha256(key, serialize(c)) != c.integrity.tag:
            return False, "tag mismatch"
        ac = c.attr_cert
        if ac is not None:
            if ac.integrity is None or ac.issuer not in keys or \
                    hmac_sha256(keys[ac.issuer], serialize(ac)) != ac.integrity.tag:
                return False, "tag mismatch"
    for c in certs:
        if now < c.not_before or now > c.not_after:
            return False, "outside validity window"
    for i in range(k):
        if certs[i].not_before < certs[i + 1].not_before or certs[i].not_after > certs[i + 1].not_after:
            return False, "window not nested"
    for i in range(k):
        if not certs[i].remaining_delegation_depth < certs[i + 1].remaining_delegation_depth:
            return False, "depth not decreasing"
    for c in certs:
        ac = c.attr_cert
        if ac is not None and (ac.holder != certs[k].subject_name or not ac.not_before <= now <= ac.not_after):
            return False, "attribute certificate invalid"
    return True, None


# -- authorization ---------------------------------------------------------------

def rule_matches(rule, names: set, loa) -> bool:
    for n, v in rule.require:
        if v == "*":
            if not any(x == n for x, _ in names):
                return False
        elif (n, v) not in names:
            return False
    return loa >= rule.min_loa


def authorize(rules, statements, loa) -> bool:
    names = {(s.name, s.value) for s in statements}
    return any(rule_matches(r, names, loa) for r in rules)


# -- trace alignment ------------------------------------------------------------

def lcs_len(a, b) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]
