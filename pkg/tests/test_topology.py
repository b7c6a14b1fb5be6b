import itertools
import random

import pytest
import yaml

from fedsim.errors import (
    DanglingReferenceError,
    DocumentFormatError,
    DuplicateEntityError,
    HubMissingError,
    InternalBehindNonProxyError,
    UnknownEntityError,
    UnknownFederationError,
)
from fedsim.scenario import bundled_scenarios, load_scenario_file
from fedsim.topology import (
    Kind,
    dump_topology,
    export_metadata,
    from_document,
    import_metadata,
    load_topology,
    to_document,
    trusts,
    validate_invariants,
)

import oracles
from conftest import FIXTURES


def load(name):
    return load_topology((FIXTURES / name).read_text())


def bundled(stem):
    return next(load_scenario_file(p) for p in bundled_scenarios() if p.stem == stem).topology


def test_minimal():
    t = load("minimal.yaml")
    assert sorted(t.entities) == ["idp:one", "sp:one"]
    assert trusts(t, "sp:one", "idp:one")


@pytest.mark.parametrize("name,error", [
    ("ghost-member.yaml", DanglingReferenceError),
    ("hub-missing.yaml", HubMissingError),
    ("duplicate.yaml", DuplicateEntityError),
    ("behind-non-proxy.yaml", InternalBehindNonProxyError),
    ("unparseable.yaml", DocumentFormatError),
    ("no-header.yaml", DocumentFormatError),
])
def test_named_load_errors(name, error):
    with pytest.raises(error):
        load(name)


def test_ghost_message():
    with pytest.raises(DanglingReferenceError, match="dangling entity reference"):
        load("ghost-member.yaml")


def test_egi_topology_shape():
    t = bundled("b7-egi")
    kinds = [e.kind for e in t.entities.values()]
    assert kinds.count(Kind.PROXY) == 1
    assert kinds.count(Kind.AA) == 1
    tts = [e for e in t.entities.values() if e.kind == Kind.TTS]
    assert len(tts) == 1
    routes = t.translators[tts[0].id].routes
    assert {r.to_tech.value for r in routes} == {"x509-like"}


# Hand-enumerated: verifier -> issuers it trusts. See fixtures/six-entity.yaml.
SIX_TABLE = {
    "idp:a": {"proxy:p", "sp:i", "sp:s2"},
    "proxy:p": {"idp:a", "sp:i", "sp:s2"},
    "idp:h": {"sp:s1", "sp:s2"},
    "sp:s1": {"idp:a", "idp:h"},
    "sp:s2": {"idp:h", "idp:a", "proxy:p", "sp:i"},
    "sp:i": {"proxy:p"},
}


def test_six_entity_truth_table():
    t = load("six-entity.yaml")
    ids = sorted(t.entities)
    assert len(ids) == 6
    got = {v: {i for i in ids if trusts(t, v, i)} for v in ids}
    assert got == SIX_TABLE
    # asymmetric pairs exist and are exercised
    assert trusts(t, "sp:s1", "idp:a") and not trusts(t, "idp:a", "sp:s1")


def test_internal_sp_trusts_only_proxy_even_in_mesh():
    t = load("six-entity.yaml")
    assert {i for i in t.entities if trusts(t, "sp:i", i)} == {"proxy:p"}


def test_internal_sp_rejects_home_idp_across_interfederation():
    t = bundled("b1-eudat")
    assert not trusts(t, "sp:b2drop", "idp:uni-x")
    assert trusts(t, "sp:b2drop", "proxy:b2access")


def test_trusts_unknown_entity():
    with pytest.raises(UnknownEntityError):
        trusts(load("minimal.yaml"), "sp:one", "idp:nope")


def test_never_self():
    t = load("six-entity.yaml")
    assert not any(trusts(t, e, e) for e in t.entities)


# -- metadata -----------------------------------------------------------------------

def test_metadata_round_trip_and_fingerprints():
    t = load("six-entity.yaml")
    doc = export_metadata(t, "f-mesh")
    assert [e["id"] for e in doc["entities"]] == sorted(["idp:a", "proxy:p", "sp:i"])
    keys = import_metadata(doc)
    assert keys == t.anchors.subset(["idp:a", "proxy:p", "sp:i"])
    for e in doc["entities"]:
        key = oracles.entity_key(t.key_seed, e["id"])
        assert e["key"] == key.hex()
        assert e["fingerprint"] == oracles.hmac_sha256(b"fedsim-fingerprint-v1", key).hex()


def test_metadata_empty_federation():
    t = load_topology("format: fedsim-topology v1\nfederations: [{id: empty, members: []}]\n")
    assert export_metadata(t, "empty")["entities"] == []


def test_metadata_unknown_federation():
    with pytest.raises(UnknownFederationError):
        export_metadata(load("minimal.yaml"), "nope")


def test_metadata_fingerprint_mismatch():
    doc = export_metadata(load("minimal.yaml"), "fed")
    doc["entities"][0]["fingerprint"] = "00" * 32
    with pytest.raises(DocumentFormatError):
        import_metadata(doc)


def test_metadata_deterministic():
    t = load("six-entity.yaml")
    assert export_metadata(t, "f-hub") == export_metadata(load("six-entity.yaml"), "f-hub")


# -- invariants -------------------------------------------------------------------

def test_bundled_scenarios_clean():
    for p in bundled_scenarios():
        assert validate_invariants(load_scenario_file(p).topology) == [], p.stem


def test_double_trust_is_soft_finding():
    t = load("double-trust.yaml")
    assert [f.rule for f in validate_invariants(t)] == ["internal-sp-multiple-trust"]


def _clean_doc(rng):
    n_idp, n_sp = rng.randint(1, 4), rng.randint(1, 4)
    idps = [f"idp:i{k}" for k in range(n_idp)]
    sps = [f"sp:s{k}" for k in range(n_sp)]
    entities = [{"id": i, "kind": "IdP"} for i in idps] + [{"id": s, "kind": "SP"} for s in sps]
    entities += [{"id": "proxy:p", "kind": "Proxy"},
                 {"id": "sp:inner", "kind": "SP", "internal_behind": "proxy:p", "trusted": ["proxy:p"]}]
    feds = [{"id": "fed", "model": "full-mesh", "members": idps + sps + ["proxy:p"]}]
    return {"format": "fedsim-topology v1", "federations": feds, "entities": entities}


def _inject(doc, kind, rng):
    ents = doc["entities"]
    if kind == "internal-sp-multiple-trust":
        next(e for e in ents if e["id"] == "sp:inner")["trusted"].append("idp:i0")
    elif kind == "kind-protocol-mismatch":
        rng.choice([e for e in ents if e["kind"] == "IdP"])["protocols"] = ["oidc-like"]
    elif kind == "dangling-member":
        doc["federations"][0]["members"].append("idp:ghost")
    elif kind == "hub-missing":
        doc["federations"].append({"id": "hub", "model": "hub-and-spoke", "members": ["idp:i0"]})
    elif kind == "internal-behind-non-proxy":
        next(e for e in ents if e["id"] == "sp:inner").update(internal_behind="idp:i0", trusted=["idp:i0"])
    elif kind == "dangling-reference":
        doc["policies"] = [{"issuer": "idp:i0", "audience": "sp:nowhere", "release": ["mail"]}]
    elif kind == "unknown-federation-model":
        doc["federations"][0]["model"] = "ring"
    elif kind == "hub-on-full-mesh":
        doc["federations"][0]["hub"] = "idp:i0"
    return doc


INJECTIONS = ["internal-sp-multiple-trust", "kind-protocol-mismatch", "dangling-member", "hub-missing",
              "internal-behind-non-proxy", "dangling-reference", "unknown-federation-model",
              "hub-on-full-mesh"]


def test_fault_injection_reports_exactly_the_injected_rule():
    rng = random.Random(17)
    for trial in range(60):
        doc = _clean_doc(rng)
        assert validate_invariants(from_document(doc)) == []
        kind = INJECTIONS[trial % len(INJECTIONS)]
        found = validate_invariants(from_document(_inject(doc, kind, rng), strict=False))
        assert {f.rule for f in found} == {kind}, (kind, found)


def test_load_dump_load_idempotent():
    for p in bundled_scenarios():
        first = load_scenario_file(p).topology
        second = load_topology(dump_topology(first))
        assert to_document(second) == to_document(first)
        assert load_topology(dump_topology(second)) == second


def test_pipe_in_id_rejected():
    with pytest.raises(DocumentFormatError):
        load_topology("format: fedsim-topology v1\nentities: [{id: 'idp:a|b', kind: IdP}]\n")


def test_all_pairs_internal_rule_on_bundled():
    for p in bundled_scenarios():
        t = load_scenario_file(p).topology
        for v, i in itertools.product(t.entities, repeat=2):
            behind = t.entities[v].internal_behind
            if behind:
                assert trusts(t, v, i) == (i == behind)


def test_document_is_yaml_round_trippable():
    t = load("six-entity.yaml")
    assert yaml.safe_load(dump_topology(t))["format"] == "fedsim-topology v1"
