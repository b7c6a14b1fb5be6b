"""Five-step flow executor, authorization decision point and trace recorder.

A flow runs on a :class:`World` and appends :class:`FlowEvent` records to a
:class:`Recorder`. Every event advances the logical clock by one second and
credentials minted for an event carry that event's timestamp.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Mapping

from .attributes import query_attributes, userinfo_statements, voms_extend
from .errors import FedsimError, FlowSpecError
from .idp import AuthnRequest, attribute_query, authenticate_oidc, authenticate_web, issue_certificate, redeem_code
from .integrity import Verdict
from .model import (
    Assertion,
    AttributeStatement,
    CertChain,
    CompositeIdentity,
    Delivery,
    EntityId,
    LoA,
    ReferenceAccess,
    ScopedId,
    Tech,
    TokenSet,
    embedded_statements,
    issuer_of,
    tech_of,
)
from .proxy import (
    aggregate,
    build_composite,
    derive_unique_id,
    downstream_plan,
    harmonize,
    handle_sp_request,
    issue_downstream,
    released_to,
)
from .topology import AUTHENTICATING_KINDS, AuthzPolicy, Kind, SPConfig, Topology, trusts
from .translation import active_account, check_credential, create_proxy_cert, has_account_record, provision_local, translate
from .world import World

ACTIONS = ("redirect", "authenticate", "issue", "translate", "query-attrs", "aggregate",
           "present", "extract", "authorize", "provision")
MODES = ("web", "non-web")
ATTR_MODES = ("push", "pull")


# -- types -----------------------------------------------------------------------

@dataclass(frozen=True)
class FlowSpec:
    user: str
    target_sp: EntityId
    tech: Tech
    provider: EntityId
    mode: str = "web"
    attr_mode: str = "push"

    def __post_init__(self):
        object.__setattr__(self, "tech", Tech(self.tech))
        if self.mode not in MODES:
            raise FlowSpecError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.attr_mode not in ATTR_MODES:
            raise FlowSpecError(f"attr_mode must be one of {ATTR_MODES}, got {self.attr_mode!r}")


def check_spec(t: Topology, spec: FlowSpec) -> None:
    """Static checks; problems that only show up while running become denials."""
    for eid in (spec.target_sp, spec.provider):
        if eid not in t.entities:
            raise FlowSpecError(f"unknown entity {eid!r}")
    if t.kind(spec.target_sp) != Kind.SP:
        raise FlowSpecError(f"{spec.target_sp} is not an SP")
    provider = t.entity(spec.provider)
    if spec.tech == Tech.X509:
        if provider.kind != Kind.CA:
            raise FlowSpecError("x509-like flows start at a CA")
    elif provider.kind not in AUTHENTICATING_KINDS or spec.tech not in provider.protocols:
        raise FlowSpecError(f"{spec.provider} does not authenticate with {spec.tech.value}")


@dataclass(frozen=True)
class FlowEvent:
    seq: int
    step: int
    actor: str
    action: str
    summary: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.action not in ACTIONS:
            raise ValueError(f"unknown action {self.action!r}")
        if not 1 <= self.step <= 5:
            raise ValueError(f"step out of range: {self.step}")

    def to_dict(self) -> dict:
        return {"seq": self.seq, "step": self.step, "actor": self.actor,
                "action": self.action, "summary": dict(self.summary)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"), ensure_ascii=False)

    @classmethod
    def from_dict(cls, d: Mapping) -> FlowEvent:
        return cls(int(d["seq"]), int(d["step"]), str(d["actor"]), str(d["action"]), dict(d.get("summary") or {}))


@dataclass(frozen=True)
class Decision:
    granted: bool
    reason: str | None = None

    def __str__(self) -> str:
        return "granted" if self.granted else f"denied({self.reason})"


GRANTED = Decision(True)


def _plain(value):
    if isinstance(value, (LoA, ScopedId)):
        return str(value)
    if isinstance(value, Tech):
        return value.value
    if isinstance(value, (list, tuple, set, frozenset)):
        items = [_plain(v) for v in value]
        return sorted(items) if isinstance(value, (set, frozenset)) else items
    if isinstance(value, Mapping):
        return {str(k): _plain(v) for k, v in value.items()}
    return value


class Recorder:
    """Collects events for a run; seq is global across flows of the run."""

    def __init__(self, world: World):
        self.world = world
        self.events: list[FlowEvent] = []
        self.flow: int | None = None

    @property
    def now(self) -> int:
        return self.world.clock

    def emit(self, step: int, actor: str, action: str, **summary) -> int:
        at = self.world.clock
        body = {k: _plain(v) for k, v in summary.items() if v is not None}
        body["at"] = at
        if self.flow is not None:
            body["flow"] = self.flow
        self.events.append(FlowEvent(len(self.events) + 1, step, actor, action, body))
        self.world.clock += 1
        return at


# -- authorization -------------------------------------------------------------

def authorize(policy: AuthzPolicy, cid: CompositeIdentity) -> Decision:
    """Default deny. On denial the reason is the first failing requirement of
    the last rule tried."""
    reason = "no matching rule"
    for rule in policy.rules:
        failure = None
        for name, value in rule.require:
            if not any(s.name == name and (value == "*" or s.value == value) for s in cid.statements):
                failure = f"missing {name}={value}"
                break
        if failure is None and cid.effective_loa < rule.min_loa:
            failure = f"loa below {rule.min_loa}"
        if failure is None:
            return GRANTED
        reason = failure
    return Decision(False, reason)


def accept_credential(world: World, consumer: EntityId, credential, now: int) -> Verdict:
    """Relying-party acceptance: trusted issuer, intact, in its window, and
    addressed to ``consumer``."""
    issuer = issuer_of(credential)
    if issuer not in world.topology.entities or not trusts(world.topology, consumer, issuer):
        return Verdict(False, f"untrusted issuer {issuer}")
    verdict = check_credential(world, credential, now)
    if not verdict:
        return Verdict(False, f"invalid credential: {verdict.reason}")
    audience = getattr(credential, "audience", None)
    if audience is not None and audience != consumer:
        return Verdict(False, f"audience mismatch: {audience}")
    return verdict


# -- flow execution ------------------------------------------------------------

class _Denied(Exception):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


def _reason(exc: FedsimError) -> str:
    text = str(exc)
    return text if exc.code in text else f"{exc.code}: {text}"


_CREDENTIAL_LABEL = {Tech.SAML: "assertion", Tech.OIDC: "token", Tech.X509: "certificate"}


def credential_summary(credential, released_by: EntityId | None = None,
                       audience: EntityId | None = None) -> dict:
    tech = tech_of(credential)
    out = {
        "credential": _CREDENTIAL_LABEL[tech],
        "tech": tech,
        "subject": credential.subject,
        "issuer": issuer_of(credential),
    }
    audience = getattr(credential, "audience", None) or audience
    if audience is not None:
        out["audience"] = audience
        out["released_by"] = released_by or issuer_of(credential)
    if isinstance(credential, TokenSet):
        out["access"] = "reference" if isinstance(credential.access, ReferenceAccess) else "self-contained"
    out["attributes"] = sorted({s.name for s in embedded_statements(credential)})
    return out


class _Flow:
    def __init__(self, world: World, spec: FlowSpec, rec: Recorder):
        self.world = world
        self.t = world.topology
        self.spec = spec
        self.rec = rec
        self.sp = spec.target_sp
        self.sp_cfg = self.t.sps.get(self.sp) or SPConfig(AuthzPolicy(self.sp))
        self.proxy = self.t.entity(self.sp).internal_behind
        self.consumer = self.proxy or self.sp
        self.user_actor = f"user:{spec.user}"
        self.web = spec.mode == "web"

    def emit(self, step, actor, action, **summary) -> int:
        return self.rec.emit(step, actor, action, **summary)

    def run(self) -> tuple[Decision, CompositeIdentity | None]:
        try:
            check_spec(self.t, self.spec)
            self.world.principal(self.spec.user)
            credential = self.obtain()
            cid = self.enrich(credential)
            return self.decide(cid), cid
        except _Denied as d:
            reason = d.reason
        except FedsimError as exc:
            reason = _reason(exc)
        self.emit(5, self.sp, "authorize", decision="denied", reason=reason)
        return Decision(False, reason), None

    # steps 1-3 ---------------------------------------------------------------

    def accept(self, consumer: EntityId, credential) -> None:
        verdict = accept_credential(self.world, consumer, credential, self.rec.now)
        if not verdict:
            raise _Denied(verdict.reason)

    def obtain(self):
        spec, t = self.spec, self.t
        if spec.tech == Tech.X509:
            return self.obtain_x509()
        if self.web:
            self.emit(1, self.sp, "redirect", to=self.consumer if self.proxy else spec.provider)
            if self.proxy:
                upstream = handle_sp_request(t, self.proxy, AuthnRequest(self.sp, self.proxy), spec.provider)
                self.emit(1, self.proxy, "redirect", to=upstream.audience)
            self.emit(2, spec.provider, "authenticate", user=spec.user)
        else:
            self.emit(1, self.user_actor, "authenticate", to=spec.provider, binding="back-channel")
        push = spec.attr_mode == "push"
        if spec.tech == Tech.SAML:
            req = AuthnRequest(self.consumer, self.consumer, binding="redirect" if self.web else "back-channel")
            credential = authenticate_web(self.world, spec.provider, spec.user, req, self.rec.now, push=push)
            self.emit(2, spec.provider, "issue", **credential_summary(credential))
        elif push:
            credential = authenticate_oidc(self.world, spec.provider, spec.user, self.consumer,
                                           "self_contained", self.rec.now)
            self.emit(2, spec.provider, "issue", **credential_summary(credential))
        else:
            code = authenticate_oidc(self.world, spec.provider, spec.user, self.consumer, "code", self.rec.now)
            self.emit(2, spec.provider, "issue", credential="auth-code", audience=self.consumer)
            self.emit(3, self.user_actor, "present", to=self.consumer, credential="auth-code")
            credential = redeem_code(self.world, spec.provider, code.code, self.consumer, self.rec.now)
            self.emit(3, spec.provider, "issue", **credential_summary(credential))
            self.accept(self.consumer, credential)
            return credential
        self.emit(3, self.user_actor, "present", to=self.consumer, credential=_CREDENTIAL_LABEL[spec.tech])
        self.accept(self.consumer, credential)
        return credential

    def obtain_x509(self) -> CertChain:
        spec, t = self.spec, self.t
        now = self.rec.now
        chain = issue_certificate(self.world, spec.provider, spec.user, t.lifetimes.certificate, now)
        self.emit(1, spec.provider, "issue", **credential_summary(chain))
        now = self.rec.now
        chain = create_proxy_cert(chain, "proxy", t.lifetimes.voms, now)
        self.emit(2, self.user_actor, "issue", credential="proxy-certificate",
                  depth=chain.leaf.remaining_delegation_depth, not_after=chain.leaf.not_after)
        voms = self.sp_cfg.voms
        if spec.attr_mode == "push" and voms is not None:
            now = self.rec.now
            chain = voms_extend(self.world, voms.voms, chain, voms.vo, voms.roles, now)
            self.emit(2, voms.voms, "issue", credential="attribute-certificate",
                      attributes=sorted({s.name for s in chain.leaf.attr_extension}),
                      not_after=chain.leaf.attr_cert.not_after)
        self.emit(3, self.user_actor, "present", to=self.consumer, credential="certificate")
        self.accept(self.consumer, chain)
        return chain

    # step 4 --------------------------------------------------------------------

    def _subject_key(self, credential) -> tuple[EntityId, str]:
        if isinstance(credential, CertChain):
            return (credential.end_entity.issuer_name, credential.subject)
        return (credential.issuer, credential.subject)

    def _auth_loa(self) -> LoA | None:
        spec = self.spec
        rec = self.world.principal(spec.user)
        subject = rec.subject_at(spec.provider)
        stored = self.world.users.get(spec.provider, {}).get(subject)
        return stored.loa_for(self.consumer) if stored else None

    def collect_upstream(self, actor: EntityId, credential) -> list:
        """Home statements at the first consumer, per the flow's attribute mode."""
        spec = self.spec
        if spec.attr_mode == "push" or isinstance(credential, CertChain):
            statements = list(embedded_statements(credential))
            self.emit(4, actor, "extract", attributes=sorted({s.name for s in statements}))
            return statements
        if isinstance(credential, Assertion):
            statements = attribute_query(self.world, credential.issuer, credential.subject, actor)
        else:
            statements = list(userinfo_statements(self.world, credential.issuer, credential, self.rec.now))
        self.emit(4, actor, "query-attrs", to=credential.issuer, attributes=sorted({s.name for s in statements}))
        return statements

    def collect_downstream(self, credential) -> list:
        if isinstance(credential, TokenSet) and isinstance(credential.access, ReferenceAccess):
            statements = list(userinfo_statements(self.world, credential.issuer, credential, self.rec.now))
            self.emit(4, self.sp, "query-attrs", to=credential.issuer,
                      attributes=sorted({s.name for s in statements}))
            return statements
        statements = list(embedded_statements(credential))
        self.emit(4, self.sp, "extract", attributes=sorted({s.name for s in statements}))
        return statements

    def emit_aggregation(self, owner: EntityId, cid: CompositeIdentity) -> None:
        for aa, count in cid.source_log[1:]:
            self.emit(4, owner, "query-attrs", to=aa, count=count)
        for aa in cid.skipped:
            self.emit(4, owner, "query-attrs", to=aa, skipped=True)
        self.emit(4, owner, "aggregate", unique_id=str(cid.persistent_unique_id),
                  effective_loa=cid.effective_loa, attributes=sorted({s.name for s in cid.statements}),
                  sources=[list(x) for x in cid.source_log])

    def site_translate(self, credential):
        site = self.sp_cfg.site_translation
        if site is None or tech_of(credential) == site[0]:
            return credential
        to_tech, via = site
        released_by = credential.issuer if not isinstance(credential, CertChain) else issuer_of(credential)
        out = translate(self.world, via, credential, to_tech, self.rec.now, audience=self.sp)
        self.emit(4, via, "translate", **{"from": tech_of(credential)}, to=to_tech,
                  **credential_summary(out, released_by=released_by, audience=self.sp))
        if not check_credential(self.world, out, self.rec.now):
            raise _Denied("site translation output failed verification")
        return out

    def enrich(self, credential) -> CompositeIdentity:
        if self.proxy:
            return self.enrich_proxied(credential)
        credential = self.site_translate(credential)
        home = self.collect_upstream(self.sp, credential)
        key = self._subject_key(credential)
        if self.sp_cfg.aggregation == "sp" and self.sp_cfg.registry:
            registry = self.sp_cfg.registry
            if self.web:
                self.emit(4, self.sp, "redirect", to=registry)
            cid = aggregate(self.world, registry, home, self.t.aggregators[registry].aas, key,
                            requester=registry, auth_loa=self._auth_loa())
            self.emit_aggregation(registry, cid)
            return cid
        return self.local_composite(home, key)

    def local_composite(self, home, key) -> CompositeIdentity:
        """Composite built by a standalone SP: its own identifier, plus any
        attribute authorities it queries itself."""
        t = self.t
        sources = []
        for aa, required in self.sp_cfg.aas:
            if not t.entity(aa).available:
                if required:
                    raise _Denied(f"required source unavailable: {aa}")
                self.emit(4, self.sp, "query-attrs", to=aa, skipped=True)
                continue
            got = query_attributes(self.world, aa, key, self.sp)
            self.emit(4, self.sp, "query-attrs", to=aa, attributes=sorted({s.name for s in got}))
            sources.append(harmonize({}, got))
        scope = self.sp.partition(":")[2] or self.sp
        sid = derive_unique_id(self.world.registry(self.sp), key[0], key[1], scope)
        return build_composite(self.sp, sid, harmonize({}, home), sources, key[0], self._auth_loa())

    def downstream_tech(self) -> Tech:
        protocols = self.t.entity(self.sp).protocols
        if self.spec.tech in protocols or not protocols:
            return self.spec.tech
        return sorted(protocols, key=lambda p: p.value)[0]

    def enrich_proxied(self, credential) -> CompositeIdentity:
        t, proxy = self.t, self.proxy
        home = self.collect_upstream(proxy, credential)
        cid = aggregate(self.world, proxy, home, t.aggregators[proxy].aas, self._subject_key(credential),
                        requester=proxy, auth_loa=self._auth_loa())
        self.emit_aggregation(proxy, cid)

        tech = self.downstream_tech()
        plan = downstream_plan(t, proxy, tech, upstream_tech=self.spec.tech)
        now = self.rec.now
        out = issue_downstream(self.world, proxy, self.sp, cid, tech, now, upstream_tech=self.spec.tech)
        summary = credential_summary(out, released_by=proxy, audience=self.sp)
        if plan.kind == "native":
            self.emit(4, proxy, "issue", **summary)
        elif plan.kind == "route":
            self.emit(4, proxy, "translate", **{"from": plan.from_tech}, to=tech, **summary)
        else:
            released = sorted({s.name for s in released_to(t, proxy, self.sp, cid.statements)})
            self.emit(4, proxy, "issue", to=plan.via, tech=plan.from_tech, audience=self.sp,
                      released_by=proxy, attributes=released)
            self.emit(4, plan.via, "translate", **{"from": plan.from_tech}, to=tech, **summary)
        self.accept(self.sp, out)
        out = self.site_translate(out)
        statements = self.collect_downstream(out)
        return self.sp_composite(out.subject, statements)

    def sp_composite(self, subject: str, statements) -> CompositeIdentity:
        """What an internal SP can reconstruct from the proxy's credential."""
        try:
            sid = ScopedId.parse(subject)
        except ValueError:
            raise _Denied(f"subject {subject!r} is not a persistent identifier") from None
        ids = [s for s in statements if s.name == "unique-id" and s.value == subject]
        loa = ids[0].loa if ids else LoA.LOW
        rest = [s for s in statements if s.name != "unique-id"]
        unique = AttributeStatement("unique-id", subject, self.proxy, loa, sid.scope, Delivery.PUSH)
        return CompositeIdentity(sid, tuple(rest) + (unique,), loa)

    # step 5 ----------------------------------------------------------------------

    def decide(self, cid: CompositeIdentity) -> Decision:
        decision = authorize(self.sp_cfg.policy, cid)
        account = None
        if not self.web and decision.granted:
            sid = cid.persistent_unique_id
            if self.sp_cfg.local_accounts:
                account = active_account(self.world, self.sp, sid)
                if account is None and self.sp_cfg.auto_provision and not has_account_record(self.world, self.sp, sid):
                    account = provision_local(self.world, self.sp, cid, handle=self.spec.user)
                    self.emit(5, self.sp, "provision", account=account.account_name,
                              privileges=sorted(account.privileges))
            if account is None:
                decision = Decision(False, "no local account")
        self.emit(5, self.sp, "authorize", decision="granted" if decision.granted else "denied",
                  reason=decision.reason, subject=str(cid.persistent_unique_id),
                  effective_loa=cid.effective_loa,
                  account=account.account_name if account else None)
        return decision


def run_flow(world: World, spec: FlowSpec, recorder: Recorder | None = None) -> tuple[Decision, list[FlowEvent]]:
    """Execute one flow at ``world.clock``; returns the decision and this flow's events."""
    rec = recorder or Recorder(world)
    start = len(rec.events)
    decision, _ = _Flow(world, spec, rec).run()
    return decision, rec.events[start:]


# -- trace post-processing -----------------------------------------------------

def release_violations(t: Topology, events) -> list[str]:
    """Credentials in the trace that carry a name outside the applicable
    (issuer, audience) release policy."""
    out = []
    for ev in events:
        s = ev.summary
        if ev.action not in ("issue", "translate") or "audience" not in s or "released_by" not in s:
            continue
        policy = t.release_policy(s["released_by"], s["audience"])
        extra = sorted(set(s.get("attributes", [])) - policy)
        if extra:
            out.append(f"seq {ev.seq}: {s['released_by']} -> {s['audience']} carries {', '.join(extra)}")
    return out


def step_order_violations(events) -> list[str]:
    """Per-flow check of the five-step structure for granted flows."""
    flows: dict = {}
    for ev in events:
        flows.setdefault(ev.summary.get("flow"), []).append(ev)
    out = []
    for flow, evs in flows.items():
        steps = [e.step for e in evs]
        if steps != sorted(steps):
            out.append(f"flow {flow}: steps not ordered")
        granted = any(e.action == "authorize" and e.summary.get("decision") == "granted" for e in evs)
        if not granted:
            continue
        for needed in (1, 2, 3, 5):
            if needed not in steps:
                out.append(f"flow {flow}: granted without step {needed}")
        if any(e.action in ("extract", "query-attrs") for e in evs) and 4 not in steps:
            out.append(f"flow {flow}: attributes used without step 4")
        decisions = [e.summary.get("decision") for e in evs if e.action == "authorize"]
        if "granted" in decisions and "denied" in decisions[decisions.index("granted"):]:
            out.append(f"flow {flow}: denial after grant")
    return out
