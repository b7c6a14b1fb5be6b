"""Scenario documents: a topology plus setup actions, flows and expectations.

Running a scenario builds a fresh :class:`World` (clock at ``epoch``), applies
setup, then runs the flows in order on one recorder so that event ``seq``
numbers are global to the run.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping

from .attributes import manage_membership
from .engine import Decision, FlowEvent, FlowSpec, Recorder, check_spec, run_flow
from .errors import FedsimError, FlowSpecError, ScenarioError
from .idp import register_guest, raise_loa
from .model import LoA
from .topology import Finding, Topology, from_document, parse_document, validate_invariants
from .translation import deprovision_local
from .world import World

SCENARIO_DIR_ENV = "FEDSIM_SCENARIO_DIR"
SETUP_ACTIONS = ("register_guest", "vet", "membership", "deprovision", "advance")


@dataclass(frozen=True)
class Expectation:
    flow: int
    decision: str | None = None
    reason: str | None = None
    skeleton: tuple[tuple[int, str, str], ...] = ()
    strict: bool = False
    count: tuple[tuple[str, int], ...] = ()
    actor: tuple[tuple[str, str], ...] = ()
    same_subject_as: int | None = None


@dataclass(frozen=True)
class FlowEntry:
    spec: FlowSpec
    pre: tuple[Mapping, ...] = ()


@dataclass(frozen=True)
class Scenario:
    name: str
    topology: Topology
    flows: tuple[FlowEntry, ...] = ()
    setup: tuple[Mapping, ...] = ()
    expected: tuple[Expectation, ...] = ()
    epoch: int = 1_000_000
    seed: int = 0


@dataclass
class FlowResult:
    index: int
    spec: FlowSpec
    decision: Decision
    events: list[FlowEvent]

    @property
    def subject(self) -> str | None:
        for ev in reversed(self.events):
            if ev.action == "authorize":
                return ev.summary.get("subject")
        return None


@dataclass
class ScenarioReport:
    name: str
    results: list[FlowResult] = field(default_factory=list)
    diffs: list[str] = field(default_factory=list)
    findings: list[Finding] = field(default_factory=list)
    events: list[FlowEvent] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.diffs


# -- loading ---------------------------------------------------------------------

def _skeleton(raw) -> tuple[tuple[int, str, str], ...]:
    out = []
    for item in raw or []:
        if isinstance(item, str):
            parts = [p.strip() for p in item.split(",")]
        else:
            parts = list(item)
        if len(parts) != 3:
            raise ScenarioError(f"skeleton entries are (step, actor-kind, action): {item!r}")
        out.append((int(parts[0]), str(parts[1]), str(parts[2])))
    return tuple(out)


def _setup_list(raw, where: str) -> tuple[Mapping, ...]:
    out = []
    for item in raw or []:
        if not isinstance(item, Mapping) or len(item) != 1 or next(iter(item)) not in SETUP_ACTIONS:
            raise ScenarioError(f"{where}: each action is a one-key mapping from {SETUP_ACTIONS}: {item!r}")
        out.append(dict(item))
    return tuple(out)


def scenario_from_document(doc: Mapping, name: str | None = None) -> Scenario:
    topology = from_document(doc)
    flows = []
    for i, f in enumerate(doc.get("flows") or []):
        try:
            spec = FlowSpec(
                user=str(f["user"]), target_sp=str(f["sp"]), tech=f["tech"], provider=str(f["provider"]),
                mode=str(f.get("mode", "web")), attr_mode=str(f.get("attrs", "push")))
            check_spec(topology, spec)
        except KeyError as exc:
            raise ScenarioError(f"flow {i}: missing field {exc}") from None
        except ValueError as exc:
            raise FlowSpecError(f"flow {i}: {exc}") from None
        flows.append(FlowEntry(spec, _setup_list(f.get("pre"), f"flow {i} pre")))
    expected = []
    for e in doc.get("expected") or []:
        idx = int(e["flow"])
        if not 0 <= idx < len(flows):
            raise ScenarioError(f"expectation refers to flow {idx}, only {len(flows)} flows")
        same = e.get("same_subject_as")
        if same is not None and not 0 <= int(same) < len(flows):
            raise ScenarioError(f"same_subject_as {same} out of range")
        expected.append(Expectation(
            flow=idx, decision=e.get("decision"), reason=e.get("reason"),
            skeleton=_skeleton(e.get("skeleton")), strict=bool(e.get("strict", False)),
            count=tuple(sorted((str(k), int(v)) for k, v in (e.get("count") or {}).items())),
            actor=tuple(sorted((str(k), str(v)) for k, v in (e.get("actor") or {}).items())),
            same_subject_as=int(same) if same is not None else None))
    return Scenario(
        name=str(doc.get("name") or name or "scenario"), topology=topology, flows=tuple(flows),
        setup=_setup_list(doc.get("setup"), "setup"), expected=tuple(expected),
        epoch=int(doc.get("epoch", 1_000_000)), seed=int(doc.get("seed", 0)))


def load_scenario(text: str, name: str | None = None) -> Scenario:
    return scenario_from_document(parse_document(text), name)


def load_scenario_file(path: str | os.PathLike) -> Scenario:
    p = Path(path)
    return load_scenario(p.read_text(encoding="utf-8"), p.stem)


def scenario_dir() -> Path:
    override = os.environ.get(SCENARIO_DIR_ENV)
    if override:
        return Path(override)
    return Path(str(resources.files("fedsim") / "scenarios"))


def bundled_scenarios() -> list[Path]:
    return sorted(scenario_dir().glob("*.yaml"))


# -- setup actions -----------------------------------------------------------------

def _subject_key(world: World, raw):
    if isinstance(raw, Mapping):
        if "unique_id" in raw:
            return str(raw["unique_id"])
        if "user" in raw:
            rec = world.principal(str(raw["user"]))
            owner = str(raw.get("via", ""))
            registry = world.registry(owner)
            for key in rec.identity_keys():
                sid = registry.lookup(*key)
                if sid is not None:
                    return str(sid)
            raise ScenarioError(f"{raw['user']} has no identifier at {owner} yet")
        return (str(raw["issuer"]), str(raw["subject_id"]))
    return raw


def apply_action(world: World, action: Mapping) -> None:
    (kind, arg), = action.items()
    if kind == "advance":
        world.clock += int(arg)
    elif kind == "register_guest":
        profile = {k: v for k, v in arg.items() if k not in ("provider", "link_to", "attributes")}
        profile.update(arg.get("attributes") or {})
        register_guest(world, str(arg["provider"]), profile, world.clock, link_to=arg.get("link_to"))
    elif kind == "vet":
        raise_loa(world, str(arg["provider"]), str(arg["user"]), str(arg["audience"]), LoA.parse(arg["loa"]))
    elif kind == "membership":
        manage_membership(world, str(arg["aa"]), str(arg["admin"]), str(arg["change"]),
                          _subject_key(world, arg["subject"]), arg["payload"])
    elif kind == "deprovision":
        sp, handle = str(arg["sp"]), str(arg["user"])
        names = [name for s, name in world.principal(handle).local_accounts if s == sp]
        account = world.accounts.get(sp, {}).get(names[0]) if names else None
        if account is None:
            raise ScenarioError(f"{handle} has no account at {sp}")
        deprovision_local(world, sp, account.mapped_from)


# -- trace comparison ---------------------------------------------------------------

def actor_kind(actor: str, topology: Topology | None = None) -> str:
    if actor.startswith("user:"):
        return "user"
    if topology is not None and actor in topology.entities:
        return topology.entities[actor].kind.value.lower()
    return actor.partition(":")[0].lower()


def _matches(expected: tuple[int, str, str], ev: FlowEvent, topology) -> bool:
    step, who, action = expected
    return (ev.step == step and ev.action == action
            and who.lower() in (actor_kind(ev.actor, topology), ev.actor.lower()))


def diff_trace(events: Iterable[FlowEvent], skeleton, strict: bool = False,
               topology: Topology | None = None) -> list[str]:
    """Align ``skeleton`` against ``events`` as a longest common subsequence.

    Each skeleton triple left unmatched yields one ``missing`` diff (in
    skeleton order); in strict mode each unmatched event yields an
    ``unexpected`` diff too.
    """
    events = list(events)
    skeleton = [tuple(x) for x in skeleton]
    n, m = len(skeleton), len(events)
    lcs = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n - 1, -1, -1):
        for j in range(m - 1, -1, -1):
            if _matches(skeleton[i], events[j], topology):
                lcs[i][j] = 1 + lcs[i + 1][j + 1]
            else:
                lcs[i][j] = max(lcs[i + 1][j], lcs[i][j + 1])
    missing, used = [], set()
    i = j = 0
    while i < n and j < m:
        if _matches(skeleton[i], events[j], topology) and lcs[i][j] == 1 + lcs[i + 1][j + 1]:
            used.add(j)
            i, j = i + 1, j + 1
        elif lcs[i + 1][j] >= lcs[i][j + 1]:
            missing.append(i)
            i += 1
        else:
            j += 1
    missing.extend(range(i, n))
    diffs = [f"missing ({s[0]}, {s[1]}, {s[2]})" for s in (skeleton[k] for k in missing)]
    if strict:
        for k, ev in enumerate(events):
            if k not in used:
                diffs.append(f"unexpected ({ev.step}, {actor_kind(ev.actor, topology)}, {ev.action}) at seq {ev.seq}")
    return diffs


def check_expectation(exp: Expectation, results: list[FlowResult], topology: Topology) -> list[str]:
    res = results[exp.flow]
    out = []
    got = "granted" if res.decision.granted else "denied"
    if exp.decision is not None and exp.decision != got:
        out.append(f"decision {got} ({res.decision.reason}), expected {exp.decision}")
    if exp.reason is not None and exp.reason not in (res.decision.reason or ""):
        out.append(f"reason {res.decision.reason!r} does not contain {exp.reason!r}")
    if exp.skeleton:
        out += diff_trace(res.events, exp.skeleton, exp.strict, topology)
    for action, n in exp.count:
        seen = sum(1 for ev in res.events if ev.action == action)
        if seen != n:
            out.append(f"{seen} {action} events, expected {n}")
    for action, who in exp.actor:
        actors = sorted({ev.actor for ev in res.events if ev.action == action})
        if actors != [who]:
            out.append(f"{action} performed by {actors or 'nobody'}, expected {who}")
    if exp.same_subject_as is not None:
        other = results[exp.same_subject_as].subject
        if res.subject is None or res.subject != other:
            out.append(f"subject {res.subject} differs from flow {exp.same_subject_as} ({other})")
    return [f"flow {exp.flow}: {d}" for d in out]


# -- running --------------------------------------------------------------------

def run_scenario(s: Scenario, seed: int | None = None) -> ScenarioReport:
    world = World.create(s.topology, seed=s.seed if seed is None else seed, clock=s.epoch)
    rec = Recorder(world)
    report = ScenarioReport(s.name, findings=validate_invariants(s.topology))
    for action in s.setup:
        apply_action(world, action)
    for i, entry in enumerate(s.flows):
        rec.flow = i
        try:
            for action in entry.pre:
                apply_action(world, action)
        except FedsimError as exc:
            raise ScenarioError(f"flow {i} setup: {exc}") from exc
        decision, events = run_flow(world, entry.spec, rec)
        report.results.append(FlowResult(i, entry.spec, decision, events))
    report.events = rec.events
    for exp in s.expected:
        report.diffs += check_expectation(exp, report.results, s.topology)
    return report


# -- trace files ----------------------------------------------------------------

def trace_text(events: Iterable[FlowEvent]) -> str:
    return "".join(ev.to_json() + "\n" for ev in events)


def write_trace(path: str | os.PathLike, events: Iterable[FlowEvent]) -> None:
    Path(path).write_text(trace_text(events), encoding="utf-8")


def parse_trace(text: str) -> list[FlowEvent]:
    events = []
    # JSON Lines: only \n separates records; U+2028 and friends may sit inside strings.
    for n, line in enumerate(text.split("\n"), 1):
        if not line.strip():
            continue
        try:
            events.append(FlowEvent.from_dict(json.loads(line)))
        except (ValueError, KeyError, TypeError) as exc:
            raise ScenarioError(f"trace line {n}: {exc}") from None
    return events


def read_trace(path: str | os.PathLike) -> list[FlowEvent]:
    return parse_trace(Path(path).read_text(encoding="utf-8"))
