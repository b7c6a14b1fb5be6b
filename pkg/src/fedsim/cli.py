"""``fedsim`` command-line front end.

Exit codes: 0 success, 1 domain failure (denial, trace diff, finding,
failed property), 2 usage or load error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .checks import SUITES, run_suite
from .diagram import RENDERERS
from .engine import FlowSpec, Recorder, check_spec, run_flow
from .errors import FedsimError
from .scenario import (
    bundled_scenarios,
    load_scenario_file,
    read_trace,
    run_scenario,
    scenario_dir,
    write_trace,
)
from .topology import from_document, load_topology, parse_document, validate_invariants
from .world import World

OK, FAILED, USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    # Usage errors come back through main's return value, not SystemExit.
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


class _UsageError(Exception):
    pass


def _fail(msg: str) -> int:
    print(f"error: {msg}", file=sys.stderr)
    return USAGE


def _resolve_scenario(name: str) -> Path:
    p = Path(name)
    if p.exists():
        return p
    for cand in (scenario_dir() / name, scenario_dir() / f"{name}.yaml"):
        if cand.exists():
            return cand
    raise FileNotFoundError(f"no scenario {name!r} (looked in {scenario_dir()})")


def cmd_validate(args) -> int:
    try:
        text = Path(args.path).read_text(encoding="utf-8")
        topology = from_document(parse_document(text), strict=False)
    except (OSError, FedsimError) as exc:
        return _fail(str(exc))
    findings = validate_invariants(topology)
    for f in findings:
        print(f)
    if not findings:
        print(f"{args.path}: ok ({len(topology.entities)} entities)")
    return FAILED if findings else OK


def cmd_run(args) -> int:
    names = args.scenario or ([] if not args.all else [str(p) for p in bundled_scenarios()])
    if not names:
        return _fail("give a scenario name or path, or --all")
    try:
        scenarios = [load_scenario_file(_resolve_scenario(n)) for n in names]
    except (OSError, FedsimError) as exc:
        return _fail(str(exc))
    out = Path(args.trace) if args.trace else None
    if out is not None and len(scenarios) > 1:
        out.mkdir(parents=True, exist_ok=True)
    status = OK
    for s in scenarios:
        try:
            report = run_scenario(s, seed=args.seed)
        except FedsimError as exc:
            return _fail(f"{s.name}: {exc}")
        if out is not None:
            write_trace(out / f"{s.name}.jsonl" if len(scenarios) > 1 else out, report.events)
        for r in report.results:
            print(f"{s.name} flow {r.index}: {r.decision}")
        for finding in report.findings:
            print(f"{s.name} finding: {finding}")
        for d in report.diffs:
            print(f"{s.name} diff: {d}")
        print(f"{s.name}: {'ok' if report.ok else 'FAILED'}")
        if not report.ok:
            status = FAILED
    return status


def cmd_flow(args) -> int:
    try:
        topology = load_topology(Path(args.topology).read_text(encoding="utf-8"))
        spec = FlowSpec(user=args.user, target_sp=args.sp, tech=args.tech, provider=args.provider,
                        mode=args.mode, attr_mode=args.attrs)
        check_spec(topology, spec)
    except (OSError, FedsimError, ValueError) as exc:
        return _fail(str(exc))
    world = World.create(topology, seed=args.seed, clock=args.epoch)
    decision, events = run_flow(world, spec, Recorder(world))
    if args.trace:
        write_trace(args.trace, events)
    else:
        for ev in events:
            print(ev.to_json())
    print(decision, file=sys.stderr)
    return OK if decision.granted else FAILED


def cmd_diagram(args) -> int:
    try:
        events = read_trace(args.trace)
    except (OSError, FedsimError) as exc:
        return _fail(str(exc))
    sys.stdout.write(RENDERERS[args.format](events))
    return OK


def cmd_scenarios(args) -> int:
    for p in bundled_scenarios():
        print(p.stem)
    return OK


def cmd_check(args) -> int:
    if args.suite not in SUITES:
        return _fail(f"unknown suite {args.suite!r}; known: {', '.join(SUITES)}")
    snapshot = None
    if args.state:
        try:
            snapshot = Path(args.state).read_text(encoding="utf-8")
        except OSError as exc:
            return _fail(str(exc))
    results = run_suite(args.suite, snapshot=snapshot)
    for r in results:
        print(r)
    return OK if all(r.passed for r in results) else FAILED


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fedsim", description="Deterministic federated-identity flow simulator.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    v = sub.add_parser("validate", help="check a topology or scenario document")
    v.add_argument("path")
    v.set_defaults(func=cmd_validate)

    r = sub.add_parser("run", help="run scenarios and compare against expectations")
    r.add_argument("scenario", nargs="*", help="path, or name of a bundled scenario")
    r.add_argument("--all", action="store_true", help="run every bundled scenario")
    r.add_argument("--trace", help="trace file (a directory when several scenarios run)")
    r.add_argument("--seed", type=int, default=None)
    r.set_defaults(func=cmd_run)

    f = sub.add_parser("flow", help="run one ad-hoc flow")
    f.add_argument("--topology", required=True)
    f.add_argument("--user", required=True)
    f.add_argument("--sp", required=True)
    f.add_argument("--tech", required=True, choices=["saml-like", "oidc-like", "x509-like"])
    f.add_argument("--provider", required=True)
    f.add_argument("--mode", default="web", choices=["web", "non-web"])
    f.add_argument("--attrs", default="push", choices=["push", "pull"])
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--epoch", type=int, default=1_000_000)
    f.add_argument("--trace")
    f.set_defaults(func=cmd_flow)

    d = sub.add_parser("diagram", help="render a trace as a sequence diagram")
    d.add_argument("trace")
    d.add_argument("--format", default="text", choices=sorted(RENDERERS))
    d.set_defaults(func=cmd_diagram)

    s = sub.add_parser("scenarios", help="list bundled scenarios")
    s.set_defaults(func=cmd_scenarios)

    c = sub.add_parser("check", help="run an invariant suite")
    c.add_argument("--suite", required=True)
    c.add_argument("--state", help="registry snapshot to check (ids suite)")
    c.set_defaults(func=cmd_check)
    return p


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return USAGE
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
