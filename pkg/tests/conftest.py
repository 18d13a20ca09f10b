import pytest

from pumpnet.calibration import load_defaults, reference_network_plan
from pumpnet.grid import ChannelGrid
from pumpnet.network import Topology
from pumpnet.planner import PlanProblem


@pytest.fixture(scope="session")
def defaults():
    return load_defaults()


@pytest.fixture(scope="session")
def k10_plan():
    """The ten-user complete-graph plan on the default grid, computed once."""
    return reference_network_plan()


@pytest.fixture(scope="session")
def k10_problem():
    users = tuple(f"U{k}" for k in range(10))
    return PlanProblem(target=Topology.complete(users), grid=ChannelGrid())
