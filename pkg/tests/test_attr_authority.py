import random

import pytest
from hypothesis import given, settings, strategies as st

from fedsim.attributes import manage_membership, query_attributes, userinfo, voms_extend
from fedsim.errors import (
    MembershipError,
    NonProxyLeafError,
    NotMemberError,
    RoleNotHeldError,
    TokenExpiredError,
    UnauthorizedAdminError,
    UnknownReferenceError,
    UnknownRelyingPartyError,
)
from fedsim.idp import authenticate_oidc, issue_certificate, redeem_code
from fedsim.model import Delivery, LoA, ReferenceAccess, TokenSet
from fedsim.translation import create_proxy_cert

from conftest import EPOCH, make_world

ALICE = "{issuer: idp:u, subject_id: alice-u}"

TOPOLOGY = f"""
format: fedsim-topology v1
federations:
  - {{id: fed, members: [idp:u, op:u, ca:u, aa:vo, voms:atlas, sp:a, sp:b]}}
entities:
  - {{id: idp:u, kind: IdP}}
  - id: op:u
    kind: OP
    users:
      - {{handle: alice, subject: alice-op, attributes: {{mail: a@u.example, affiliation: member, display-name: A}}}}
  - id: ca:u
    kind: CA
    users:
      - {{handle: alice, subject: /CN=alice}}
      - {{handle: bob, subject: /CN=bob}}
  - id: aa:vo
    kind: AA
    admins: [root]
    records:
      - {{subject: {ALICE}, groups: [vo-atlas, vo-x], roles: [[vo-atlas, production]], custom: {{bona-fide: researcher}}}}
  - id: voms:atlas
    kind: VOMS
    records:
      - {{subject: {{issuer: ca:u, subject_id: /CN=alice}}, groups: [vo-atlas], roles: [[vo-atlas, production]]}}
  - {{id: sp:a, kind: SP}}
  - {{id: sp:b, kind: SP}}
  - {{id: sp:c, kind: SP}}
policies:
  - {{issuer: aa:vo, audience: sp:a, release: [group, role, bona-fide]}}
  - {{issuer: op:u, audience: sp:a, release: [mail, affiliation]}}
"""

KEY = ("idp:u", "alice-u")


@pytest.fixture
def world():
    return make_world(TOPOLOGY)


def _pairs(statements):
    return sorted((s.name, s.value) for s in statements)


def test_query_groups_and_roles(world):
    got = query_attributes(world, "aa:vo", KEY, "sp:a")
    # Non-canonical custom names are stored under the raw: prefix.
    assert _pairs(got) == [("group", "vo-atlas"), ("group", "vo-x"), ("raw:bona-fide", "researcher"), 
                           ("role", "vo-atlas:production")]
    assert all(s.issuer == "aa:vo" and s.delivery == Delivery.PULL for s in got)
    assert all(s.loa <= LoA.SUBSTANTIAL for s in got)


def test_unknown_subject_is_empty(world):
    assert query_attributes(world, "aa:vo", ("idp:u", "nobody"), "sp:a") == []
    assert query_attributes(world, "aa:vo", ("idp:other", "alice-u"), "sp:a") == []


def test_untrusted_requester(world):
    with pytest.raises(UnknownRelyingPartyError):
        query_attributes(world, "aa:vo", KEY, "sp:c")


def test_release_is_intersection_for_random_policies():
    stored = {"group", "role", "bona-fide"}
    rng = random.Random(5)
    for _ in range(20):
        policy = sorted(n for n in stored | {"mail"} if rng.random() < 0.5)
        w = make_world(TOPOLOGY.replace("release: [group, role, bona-fide]", f"release: [{', '.join(policy)}]"))
        names = {s.name for s in query_attributes(w, "aa:vo", KEY, "sp:a")}
        assert names == {("raw:" + n if n == "bona-fide" else n) for n in stored & set(policy)}


def _proxy_chain(world, handle="alice", lifetime=3600, now=EPOCH):
    chain = issue_certificate(world, "ca:u", handle, 864000, EPOCH)
    return create_proxy_cert(chain, "job", lifetime, now)


def test_voms_extension(world):
    chain = voms_extend(world, "voms:atlas", _proxy_chain(world), "vo-atlas", {"production"}, EPOCH)
    ext = chain.leaf.attr_extension
    assert _pairs(ext) == [("group", "vo-atlas"), ("role", "vo-atlas:production")]
    assert all(s.delivery == Delivery.PUSH and s.issuer == "voms:atlas" for s in ext)


def test_voms_errors(world):
    with pytest.raises(RoleNotHeldError, match="role not held"):
        voms_extend(world, "voms:atlas", _proxy_chain(world), "vo-atlas", {"admin"}, EPOCH)
    with pytest.raises(NotMemberError):
        voms_extend(world, "voms:atlas", _proxy_chain(world, "bob"), "vo-atlas", set(), EPOCH)
    with pytest.raises(NonProxyLeafError):
        voms_extend(world, "voms:atlas", issue_certificate(world, "ca:u", "alice", 864000, EPOCH),
                    "vo-atlas", set(), EPOCH)


# Hand-computed: leaf created at EPOCH with lifetime L, extended at EPOCH + off.
MIN_TABLE = {
    (3600, 0): EPOCH + 3600,
    (3600, 1800): EPOCH + 3600,
    (3600, 3599): EPOCH + 3600,
    (86400, 0): EPOCH + 43200,
    (86400, 1800): EPOCH + 45000,
    (86400, 43200): EPOCH + 86400,
    (86400, 50000): EPOCH + 86400,
}


@pytest.mark.parametrize("lifetime,offset", sorted(MIN_TABLE))
def test_voms_lifetime_min_table(world, lifetime, offset):
    chain = _proxy_chain(world, lifetime=lifetime)
    out = voms_extend(world, "voms:atlas", chain, "vo-atlas", set(), EPOCH + offset)
    assert out.leaf.attr_cert.not_after == MIN_TABLE[(lifetime, offset)]


def _reference_token(world, now=EPOCH):
    code = authenticate_oidc(world, "op:u", "alice", "sp:a", "code", now)
    return redeem_code(world, "op:u", code, "sp:a", now)


def test_userinfo_reference(world):
    token = _reference_token(world)
    assert isinstance(token.access, ReferenceAccess)
    claims = userinfo(world, "op:u", token, EPOCH)
    assert claims == {"sub": "alice-op", "affiliation": "member", "mail": "a@u.example"}


def test_userinfo_expiry_boundary(world):
    token = _reference_token(world)
    userinfo(world, "op:u", token, token.not_after)
    with pytest.raises(TokenExpiredError, match="expired"):
        userinfo(world, "op:u", token, token.not_after + 1)


def test_userinfo_unknown_reference(world):
    token = _reference_token(world)
    world.references.clear()
    with pytest.raises(UnknownReferenceError):
        userinfo(world, "op:u", token, EPOCH)


def test_userinfo_matches_self_contained(world):
    ref = userinfo(world, "op:u", _reference_token(world), EPOCH)
    sc = authenticate_oidc(world, "op:u", "alice", "sp:a", "self_contained", EPOCH)
    assert isinstance(sc, TokenSet)
    assert ref == userinfo(world, "op:u", sc, EPOCH)
    assert {k: v for k, v in ref.items() if k != "sub"} == dict(_pairs(sc.access.claims))


def test_membership_write_read(world):
    manage_membership(world, "aa:vo", "root", "add_group", KEY, "vo-elixir")
    assert ("group", "vo-elixir") in _pairs(query_attributes(world, "aa:vo", KEY, "sp:a"))


def test_membership_cascade(world):
    manage_membership(world, "aa:vo", "root", "remove_group", KEY, "vo-atlas")
    got = _pairs(query_attributes(world, "aa:vo", KEY, "sp:a"))
    assert ("role", "vo-atlas:production") not in got and ("group", "vo-atlas") not in got


def test_membership_errors(world):
    with pytest.raises(UnauthorizedAdminError):
        manage_membership(world, "aa:vo", "mallory", "add_group", KEY, "g")
    with pytest.raises(MembershipError):
        manage_membership(world, "aa:vo", "root", "remove_group", KEY, "never")
    with pytest.raises(MembershipError):
        manage_membership(world, "aa:vo", "root", "remove_role", KEY, "vo-x:boss")
    with pytest.raises(MembershipError):
        manage_membership(world, "aa:vo", "root", "add_role", KEY, ("nogroup", "r"))


GROUPS = ["g0", "g1", "g2"]
OPS = st.lists(st.tuples(
    st.sampled_from(["add_group", "remove_group", "add_role", "remove_role"]),
    st.sampled_from(GROUPS), st.sampled_from(["r0", "r1"])), max_size=25)


@settings(max_examples=60, deadline=None)
@given(OPS)
def test_membership_matches_set_model(ops):
    world = make_world(TOPOLOGY)
    key = ("idp:u", "fresh")
    groups, roles = set(), set()
    for change, g, r in ops:
        # Reference model: errors leave state untouched.
        if change == "add_group":
            ok = True
            groups.add(g)
        elif change == "remove_group":
            ok = g in groups
            if ok:
                groups.discard(g)
                roles = {x for x in roles if x[0] != g}
        elif change == "add_role":
            ok = g in groups
            if ok:
                roles.add((g, r))
        else:
            ok = (g, r) in roles
            roles.discard((g, r))
        payload = g if change.endswith("group") else (g, r)
        if ok:
            manage_membership(world, "aa:vo", "root", change, key, payload)
        else:
            with pytest.raises(MembershipError):
                manage_membership(world, "aa:vo", "root", change, key, payload)
        assert all(x[0] in groups for x in roles)
    expect = sorted([("group", g) for g in groups] + [("role", f"{g}:{r}") for g, r in roles])
    assert _pairs(query_attributes(world, "aa:vo", key, "sp:a")) == expect
