"""
Shared fixtures: the built-in tracking scenario, small toy networks, and a
tolerance reset around every test.
"""
import os
import sys

import numpy as np
import pytest

# Add the project root directory to Python path (parent of tests)
BASE_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
if BASE_DIR not in sys.path:
    sys.path.insert(0, BASE_DIR)

from cmdf.config import reset_tolerances  # noqa: E402
from cmdf.model import SensorModel, SystemModel  # noqa: E402
from cmdf.network import graph_metrics, metropolis_weights, path_graph, random_geometric, uniform_weights  # noqa: E402
from cmdf.simulate import paper_scenario  # noqa: E402

PAPER_GRAPH_SEED = 1


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long Monte Carlo / full-scenario acceptance runs")


@pytest.fixture(autouse=True)
def _clean_tolerances():
    reset_tolerances()
    yield
    reset_tolerances()


@pytest.fixture(scope="session")
def paper():
    """(system, sensors, graph, weights, diameter) of the built-in scenario on graph seed 1."""
    system, sensors, params = paper_scenario()
    g = random_geometric(params.N, params.width, params.radius, PAPER_GRAPH_SEED)
    return system, sensors, g, metropolis_weights(g), graph_metrics(g).diameter


@pytest.fixture(scope="session")
def tracking():
    """Two decoupled constant-velocity targets."""
    return paper_scenario().system


@pytest.fixture(scope="session")
def path3():
    g = path_graph(3)
    return g, metropolis_weights(g)


@pytest.fixture(scope="session")
def chain(tracking):
    """5-node path: first position sensor at node 0, second at node 4, naive nodes between."""
    g = path_graph(5)
    sensors = (
        [SensorModel(np.array([[1.0, 0.0, 0.0, 0.0]]), np.eye(1))]
        + [SensorModel.naive(4) for _ in range(3)]
        + [SensorModel(np.array([[0.0, 0.0, 1.0, 0.0]]), np.eye(1))]
    )
    return tracking, sensors, g, metropolis_weights(g)


@pytest.fixture(scope="session")
def complete5(tracking):
    """5 fully connected nodes with uniform weights; two observing sensors and three naive ones."""
    sensors = (
        [SensorModel(np.array([[1.0, 0.0, 0.0, 0.0]]), np.eye(1)),
         SensorModel(np.array([[0.0, 0.0, 1.0, 0.0]]), np.eye(1))]
        + [SensorModel.naive(4) for _ in range(3)]
    )
    return tracking, sensors, uniform_weights(5)


@pytest.fixture(scope="session")
def scalar_system():
    return SystemModel(np.array([[0.5]]), np.array([[1.0]]))
