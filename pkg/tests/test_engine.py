import itertools
import random

import pytest
from hypothesis import given, settings, strategies as st

from fedsim.engine import (
    FlowEvent,
    FlowSpec,
    Recorder,
    authorize,
    release_violations,
    run_flow,
    step_order_violations,
)
from fedsim.errors import ScenarioError
from fedsim.model import AttributeStatement, CompositeIdentity, LoA, ScopedId, Tech
from fedsim.reference import reference_cases
from fedsim.scenario import (
    bundled_scenarios,
    diff_trace,
    load_scenario,
    load_scenario_file,
    parse_trace,
    run_scenario,
    trace_text,
)
from fedsim.topology import AuthzPolicy, Rule

import oracles
from conftest import make_world

SID = ScopedId("0" * 32, "x.example")


def _cid(pairs, loa=LoA.LOW):
    sts = tuple(AttributeStatement(n, v, "aa:x") for n, v in pairs)
    return CompositeIdentity(SID, sts + (AttributeStatement("unique-id", str(SID), "proxy:x", loa),), loa)


def _scenario(name):
    return load_scenario_file(next(p for p in bundled_scenarios() if p.stem == name))


# -- authorization ---------------------------------------------------------------

def test_rule_grants():
    policy = AuthzPolicy("sp:x", (Rule((("group", "vo-atlas"),), LoA.LOW),))
    assert authorize(policy, _cid([("group", "vo-atlas")])).granted


def test_loa_gate():
    policy = AuthzPolicy("sp:x", (Rule((("group", "vo-atlas"),), LoA.SUBSTANTIAL),))
    d = authorize(policy, _cid([("group", "vo-atlas")], LoA.LOW))
    assert not d.granted and d.reason == "loa below substantial"


def test_default_deny():
    assert authorize(AuthzPolicy("sp:x"), _cid([])).reason == "no matching rule"


def test_nearest_miss_is_last_rule():
    policy = AuthzPolicy("sp:x", (Rule((("group", "a"),)), Rule((("mail", "*"), ("group", "b")))))
    assert authorize(policy, _cid([("mail", "m")])).reason == "missing group=b"


POOL = [("group", "g1"), ("group", "g2"), ("affiliation", "member"), ("role", "g1:admin")]
RULES = [Rule((("group", "g1"),), LoA.LOW),
         Rule((("affiliation", "member"), ("role", "g1:admin")), LoA.HIGH),
         Rule((("group", "*"), ("affiliation", "*")), LoA.SUBSTANTIAL)]


def test_authorize_exhaustive_oracle():
    cases = 0
    for mask in range(16):
        chosen = [p for b, p in enumerate(POOL) if mask >> b & 1]
        for loa in LoA:
            for k in range(len(RULES) + 1):
                for rules in itertools.combinations(RULES, k):
                    cid = _cid(chosen, loa)
                    expect = oracles.authorize(rules, cid.statements, loa)
                    assert authorize(AuthzPolicy("sp:x", rules), cid).granted == expect
                    cases += 1
    assert cases == 16 * 3 * 8


# -- flows on the reference topology ----------------------------------------------------

def test_saml_web_flow_granted(ref_world):
    spec = FlowSpec("alice", "sp:ref-direct", Tech.SAML, "idp:ref")
    decision, events = run_flow(ref_world, spec)
    assert decision.granted
    steps = [e.step for e in events]
    assert steps == sorted(steps) and {1, 2, 3, 5} <= set(steps)
    assert [e.seq for e in events] == list(range(1, len(events) + 1))


def test_user_without_attributes_denied():
    world = make_world("""
format: fedsim-topology v1
federations:
  - {id: f, members: [idp:z, sp:z]}
entities:
  - id: idp:z
    kind: IdP
    users: [{handle: zed, subject: zed}]
  - {id: sp:z, kind: SP}
""")
    decision, events = run_flow(world, FlowSpec("zed", "sp:z", Tech.SAML, "idp:z"))
    assert decision.reason == "no matching rule" and not decision.granted
    assert events[-1].action == "authorize"


def test_clock_advances_one_second_per_event(ref_world):
    start = ref_world.clock
    _, events = run_flow(ref_world, FlowSpec("alice", "sp:ref-internal", Tech.OIDC, "op:ref"))
    assert [e.summary["at"] for e in events] == list(range(start, start + len(events)))
    assert ref_world.clock == start + len(events)


@pytest.mark.parametrize("case", reference_cases(), ids=lambda c: c.label)
def test_reference_conformance(ref_topology, case):
    world = make_world(ref_topology)
    decision, events = run_flow(world, case.spec, Recorder(world))
    assert decision.granted, decision
    assert step_order_violations(events) == []
    steps = [e.step for e in events]
    if case.spec.attr_mode == "pull" or any(e.action == "extract" for e in events):
        assert 4 in steps
    assert release_violations(ref_topology, events) == []


def test_reference_case_count():
    assert len(reference_cases()) >= 48


def test_proxy_interposition(ref_topology):
    for case in reference_cases():
        sp = case.spec.target_sp
        if ref_topology.entities[sp].internal_behind is None:
            continue
        world = make_world(ref_topology)
        _, events = run_flow(world, case.spec)
        for e in events:
            if e.action == "issue" and e.actor == case.spec.provider:
                assert e.summary.get("audience") != sp


# -- scenarios ------------------------------------------------------------------

@pytest.mark.parametrize("path", bundled_scenarios(), ids=lambda p: p.stem)
def test_bundled_scenarios(path):
    report = run_scenario(load_scenario_file(path))
    assert report.ok, report.diffs
    assert report.findings == []
    assert step_order_violations(report.events) == []


def test_bundled_set_is_complete():
    assert [p.stem for p in bundled_scenarios()] == [
        "b1-eudat", "b2-dariah", "b3-elixir", "b4-wlcg", "b5-umbrella", "b6-indigo", "b7-egi"]


def test_umbrella_vetting_gate():
    report = run_scenario(_scenario("b5-umbrella"))
    decisions = [r.decision.granted for r in report.results]
    assert decisions[:2] == [False, True]


def test_indigo_two_translations():
    report = run_scenario(_scenario("b6-indigo"))
    translates = [e for e in report.results[0].events if e.action == "translate"]
    assert len(translates) == 2
    assert [(e.summary["from"], e.summary["to"]) for e in translates] == [
        ("saml-like", "oidc-like"), ("oidc-like", "x509-like")]


def test_dariah_sp_side_aggregation():
    report = run_scenario(_scenario("b2-dariah"))
    ev = report.results[0].events
    assert [e.actor for e in ev if e.action == "aggregate"] == ["sp:dariah-registration"]
    assert sum(1 for e in ev if e.action == "redirect") >= 2


def test_empty_scenario():
    s = load_scenario("format: fedsim-scenario v1\nname: empty\nentities:\n  - {id: sp:a, kind: SP}\n")
    report = run_scenario(s)
    assert (report.results, report.diffs, report.findings, report.events) == ([], [], [], [])
    assert report.ok


def test_scenario_determinism():
    for path in bundled_scenarios():
        s = load_scenario_file(path)
        assert trace_text(run_scenario(s).events) == trace_text(run_scenario(s).events)


def test_bad_expectation_index():
    with pytest.raises(ScenarioError):
        load_scenario("format: fedsim-scenario v1\nentities: []\nexpected:\n  - {flow: 0}\n")


# -- trace diffing -----------------------------------------------------------------

def _triples(events, topology):
    from fedsim.scenario import actor_kind
    return [(e.step, actor_kind(e.actor, topology), e.action) for e in events]


def test_identical_strict_is_clean():
    s = _scenario("b1-eudat")
    events = run_scenario(s).events
    assert diff_trace(events, _triples(events, s.topology), strict=True, topology=s.topology) == []


def test_missing_aggregate_named():
    s = _scenario("b7-egi")
    events = run_scenario(s).results[0].events
    skeleton = _triples(events, s.topology)
    assert (4, "proxy", "aggregate") in skeleton
    trimmed = [e for e in events if e.action != "aggregate"]
    assert diff_trace(trimmed, skeleton, topology=s.topology) == ["missing (4, proxy, aggregate)"]


def test_deletion_fuzz():
    s = _scenario("b1-eudat")
    events = run_scenario(s).events
    skeleton = _triples(events, s.topology)
    rng = random.Random(50)
    for _ in range(50):
        k = rng.randrange(1, 6)
        gone = set(rng.sample(range(len(events)), k))
        kept = [e for i, e in enumerate(events) if i not in gone]
        diffs = diff_trace(kept, skeleton, topology=s.topology)
        assert len(diffs) == k == len(skeleton) - oracles.lcs_len(skeleton, _triples(kept, s.topology))


def test_strict_reports_extras():
    s = _scenario("b4-wlcg")
    events = run_scenario(s).results[0].events
    diffs = diff_trace(events, _triples(events, s.topology)[1:], strict=True, topology=s.topology)
    assert diffs == [f"unexpected {_fmt(_triples(events, s.topology)[0])} at seq {events[0].seq}"]


def _fmt(triple):
    return "(" + ", ".join(str(x) for x in triple) + ")"


# -- trace format ----------------------------------------------------------------

EVENTS = st.lists(st.builds(
    FlowEvent, st.integers(1, 10 ** 6), st.integers(1, 5), st.sampled_from(["idp:a", "proxy:p", "user:al"]),
    st.sampled_from(["redirect", "issue", "authorize"]),
    st.dictionaries(st.sampled_from(["to", "at", "decision"]), st.text(max_size=5) | st.integers())),
    max_size=10)


@settings(max_examples=50, deadline=None)
@given(EVENTS)
def test_trace_round_trip(events):
    assert parse_trace(trace_text(events)) == events


@pytest.mark.parametrize("line", ["{", '{"seq": 1}', '{"seq":1,"step":9,"actor":"a","action":"issue"}',
                                  '{"seq":1,"step":1,"actor":"a","action":"teleport"}'])
def test_trace_parse_errors(line):
    with pytest.raises(ScenarioError, match="trace line 1"):
        parse_trace(line + "\n")


def test_line_separator_inside_summary():
    ev = [FlowEvent(1, 1, "idp:a", "issue", {"note": "a\u2028b\x85c\rd"})]
    assert parse_trace(trace_text(ev)) == ev
