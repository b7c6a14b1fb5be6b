"""Deterministic simulator for federated authentication and authorisation.

Typical use goes through a scenario document::

    from fedsim import load_scenario_file, run_scenario
    report = run_scenario(load_scenario_file("b1-eudat.yaml"))

or through the ``fedsim`` command.
"""

from .engine import Decision, FlowEvent, FlowSpec, Recorder, authorize, run_flow
from .errors import FedsimError
from .model import (
    Assertion,
    AttributeStatement,
    CertChain,
    CompositeIdentity,
    LoA,
    ScopedId,
    Tech,
    TokenSet,
    canonical_serialize,
    loa_combine,
    normalize_name,
)
from .proxy import IdRegistry, aggregate, derive_unique_id, harmonize
from .scenario import (
    Scenario,
    ScenarioReport,
    bundled_scenarios,
    diff_trace,
    load_scenario,
    load_scenario_file,
    run_scenario,
)
from .topology import Topology, load_topology, trusts, validate_invariants
from .translation import translate, validate_chain
from .world import World

__version__ = "0.1.0"

__all__ = [
    "Assertion", "AttributeStatement", "CertChain", "CompositeIdentity", "Decision", "FedsimError",
    "FlowEvent", "FlowSpec", "IdRegistry", "LoA", "Recorder", "Scenario", "ScenarioReport", "ScopedId",
    "Tech", "TokenSet", "Topology", "World", "aggregate", "authorize", "bundled_scenarios",
    "canonical_serialize", "derive_unique_id", "diff_trace", "harmonize", "load_scenario",
    "load_scenario_file", "load_topology", "loa_combine", "normalize_name", "run_flow", "run_scenario",
    "translate", "trusts", "validate_chain", "validate_invariants",
]
