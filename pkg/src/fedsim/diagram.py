"""Sequence-diagram rendering of traces (plain text or Mermaid)."""

from __future__ import annotations

from .engine import FlowEvent


def _target(ev: FlowEvent) -> str:
    s = ev.summary
    # On translate events "to" names the output technology, not a party.
    to = None if ev.action == "translate" else s.get("to")
    return str(to or s.get("audience") or ev.actor)


def _label(ev: FlowEvent) -> str:
    s = ev.summary
    extra = s.get("decision") or s.get("credential")
    if ev.action == "translate" and "from" in s:
        extra = f"{s['from']} -> {s.get('to')}"
    return f"{ev.step}. {ev.action}" + (f" [{extra}]" if extra else "")


def participants(events) -> list[str]:
    seen: dict[str, None] = {}
    for ev in events:
        seen.setdefault(ev.actor)
        seen.setdefault(_target(ev))
    return list(seen)


def render_text(events) -> str:
    events = sorted(events, key=lambda e: e.seq)
    lines = ["participants: " + ", ".join(participants(events))]
    for ev in events:
        lines.append(f"{ev.seq:>4}  {ev.actor} -> {_target(ev)}: {_label(ev)}")
    return "\n".join(lines) + "\n"


def render_mermaid(events) -> str:
    events = sorted(events, key=lambda e: e.seq)
    names = participants(events)
    alias = {name: f"P{i}" for i, name in enumerate(names, 1)}
    lines = ["sequenceDiagram"]
    lines += [f"    participant {alias[n]} as {n}" for n in names]
    for ev in events:
        lines.append(f"    {alias[ev.actor]}->>{alias[_target(ev)]}: {_label(ev)}")
    return "\n".join(lines) + "\n"


RENDERERS = {"text": render_text, "mermaid": render_mermaid}
