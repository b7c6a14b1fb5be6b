import dataclasses
import itertools
import random

import pytest
from hypothesis import given, strategies as st

from fedsim.errors import UnknownIssuerKeyError
from fedsim.idp import AuthnRequest, authenticate_web
from fedsim.integrity import KeyRegistry, derive_key, mint_integrity_tag, sign, verify_integrity
from fedsim.model import (
    Assertion,
    AttributeStatement,
    LoA,
    ScopedId,
    canonical_serialize,
    loa_combine,
    normalize_name,
)

import oracles

SEED = "core"
ANCHORS = KeyRegistry({e: derive_key(SEED, e) for e in ("idp:a", "idp:b")})


def fixture_assertion(**over):
    base = dict(
        subject="alice",
        issuer="idp:a",
        audience="sp:x",
        attributes=(AttributeStatement("mail", "a@x.example", "idp:a"),
                    AttributeStatement("affiliation", "member", "idp:a", LoA.SUBSTANTIAL)),
        auth_instant=100,
        not_before=100,
        not_after=400,
    )
    base.update(over)
    return Assertion(**base)


def test_serialize_matches_independent_encoder():
    a = fixture_assertion()
    assert canonical_serialize(a) == oracles.serialize(a)


def test_serialize_ignores_attribute_order():
    a = fixture_assertion()
    b = fixture_assertion(attributes=tuple(reversed(a.attributes)))
    assert canonical_serialize(a) == canonical_serialize(b)


def test_serialize_sensitive_to_not_after():
    assert canonical_serialize(fixture_assertion()) != canonical_serialize(fixture_assertion(not_after=401))


def test_serialize_excludes_own_integrity():
    a = sign(ANCHORS, fixture_assertion())
    assert canonical_serialize(a) == canonical_serialize(dataclasses.replace(a, integrity=None))


MUTATIONS = {
    "subject": "bob",
    "issuer": "idp:b",
    "audience": "sp:y",
    "attributes": (AttributeStatement("mail", "b@x.example", "idp:a"),),
    "auth_instant": 101,
    "not_before": 99,
    "not_after": 399,
}


@pytest.mark.parametrize("field", sorted(MUTATIONS))
def test_single_field_mutation_changes_bytes(field):
    # 6 data fields plus the auth instant: each one must reach the bytes
    a = fixture_assertion()
    assert canonical_serialize(a) != canonical_serialize(dataclasses.replace(a, **{field: MUTATIONS[field]}))


def test_attribute_value_mutation_changes_bytes():
    a = fixture_assertion()
    for i, s in enumerate(a.attributes):
        for f, v in (("value", s.value + "!"), ("issuer", "idp:b"), ("loa", LoA.HIGH),
                     ("scope", "x.example"), ("name", "raw:other")):
            attrs = list(a.attributes)
            attrs[i] = dataclasses.replace(s, **{f: v})
            assert canonical_serialize(a) != canonical_serialize(dataclasses.replace(a, attributes=tuple(attrs)))


def test_tag_deterministic_and_key_separated():
    payload = b"payload"
    t1 = mint_integrity_tag(ANCHORS, "idp:a", payload)
    assert t1 == mint_integrity_tag(ANCHORS, "idp:a", payload)
    assert t1.tag != mint_integrity_tag(ANCHORS, "idp:b", payload).tag


def test_tag_matches_independent_hmac():
    rng = random.Random(3)
    for _ in range(20):
        payload = rng.randbytes(rng.randrange(0, 300))
        tag = mint_integrity_tag(ANCHORS, "idp:a", payload)
        assert tag.tag == oracles.hmac_sha256(oracles.entity_key(SEED, "idp:a"), payload)


def test_unknown_issuer_key():
    with pytest.raises(UnknownIssuerKeyError):
        mint_integrity_tag(ANCHORS, "idp:ghost", b"x")


def test_verify_round_trip_and_tamper():
    a = sign(ANCHORS, fixture_assertion())
    assert verify_integrity(ANCHORS, a)
    flipped = (dataclasses.replace(a.attributes[0], value="evil"),) + a.attributes[1:]
    verdict = verify_integrity(ANCHORS, dataclasses.replace(a, attributes=flipped))
    assert not verdict and verdict.reason == "tag mismatch"


def test_verify_unknown_issuer():
    a = sign(ANCHORS, fixture_assertion())
    verdict = verify_integrity(KeyRegistry({"idp:b": ANCHORS["idp:b"]}), a)
    assert verdict.reason == "unknown issuer"


def test_hundred_single_byte_corruptions_rejected():
    a = sign(ANCHORS, fixture_assertion())
    payload = canonical_serialize(a)
    key = oracles.entity_key(SEED, "idp:a")
    assert oracles.hmac_sha256(key, payload) == a.integrity.tag
    rng = random.Random(5)
    for _ in range(100):
        i = rng.randrange(len(payload))
        corrupted = payload[:i] + bytes([payload[i] ^ rng.randrange(1, 256)]) + payload[i + 1:]
        assert mint_integrity_tag(ANCHORS, "idp:a", corrupted).tag != a.integrity.tag


def test_issued_assertion_verifies(ref_world):
    cred = authenticate_web(ref_world, "idp:ref", "alice", AuthnRequest("proxy:ref", "proxy:ref"), ref_world.clock)
    assert verify_integrity(ref_world.topology.anchors, cred)


# -- LoA ---------------------------------------------------------------------------

def test_loa_examples():
    assert loa_combine([LoA.HIGH]) == LoA.HIGH
    assert loa_combine([LoA.HIGH, LoA.LOW, LoA.SUBSTANTIAL]) == LoA.LOW
    assert LoA.LOW < LoA.SUBSTANTIAL < LoA.HIGH


def test_loa_all_triples():
    order = {LoA.LOW: 0, LoA.SUBSTANTIAL: 1, LoA.HIGH: 2}
    for triple in itertools.product(list(LoA), repeat=3):
        expect = min(triple, key=order.get)
        assert loa_combine(list(triple)) == expect


def test_loa_empty():
    with pytest.raises(ValueError):
        loa_combine([])


@given(st.lists(st.sampled_from(list(LoA)), min_size=1, max_size=8), st.randoms())
def test_loa_lower_bound_and_permutation(levels, rnd):
    m = loa_combine(levels)
    assert all(m <= x for x in levels)
    shuffled = list(levels)
    rnd.shuffle(shuffled)
    assert loa_combine(shuffled) == m


def test_loa_parse_and_render():
    for level in LoA:
        assert LoA.parse(str(level)) == level


# -- names and identifiers ------------------------------------------------------------

def test_statement_name_invariant():
    with pytest.raises(ValueError):
        AttributeStatement("eduPersonAffiliation", "member", "idp:a")
    with pytest.raises(ValueError):
        AttributeStatement("mail", "x", "")
    assert normalize_name("eduPersonAffiliation") == "raw:eduPersonAffiliation"
    assert normalize_name("mail") == "mail"
    assert normalize_name("raw:x") == "raw:x"


def test_scoped_id_format():
    sid = ScopedId("0" * 32, "x.example")
    assert str(sid) == "0" * 32 + "@x.example"
    assert ScopedId.parse(str(sid)) == sid
    for bad in ("0" * 31, "0" * 33, "G" * 32, "A" * 32):
        with pytest.raises(ValueError):
            ScopedId(bad, "x")
    with pytest.raises(ValueError):
        ScopedId("0" * 32, "")


@given(st.text("0123456789abcdef", min_size=32, max_size=32), st.text(min_size=1, max_size=10).filter(lambda s: "@" not in s),
       st.text("0123456789abcdef", min_size=32, max_size=32), st.text(min_size=1, max_size=10).filter(lambda s: "@" not in s))
def test_scoped_id_rendering_injective(l1, s1, l2, s2):
    a, b = ScopedId(l1, s1), ScopedId(l2, s2)
    assert (str(a) == str(b)) == ((l1, s1) == (l2, s2))


def test_window_invariant():
    with pytest.raises(ValueError):
        fixture_assertion(not_before=400, not_after=400)
