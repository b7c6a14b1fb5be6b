import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from fedsim.reference import reference_topology  # noqa: E402
from fedsim.topology import load_topology  # noqa: E402
from fedsim.world import World  # noqa: E402

FIXTURES = Path(__file__).parent / "fixtures"
EPOCH = 1_000_000


def make_world(text_or_topology, clock=EPOCH, seed=0):
    t = load_topology(text_or_topology) if isinstance(text_or_topology, str) else text_or_topology
    return World.create(t, seed=seed, clock=clock)


@pytest.fixture
def ref_topology():
    return reference_topology()


@pytest.fixture
def ref_world(ref_topology):
    return make_world(ref_topology)
