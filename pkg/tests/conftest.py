import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from distobs.graph import build_graph
from distobs.spectral import make_weight
from distobs.sysmodel import LtiSystem

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def path3():
    return build_graph(3, [(0, 1), (1, 2)])


@pytest.fixture
def k3():
    return build_graph(3, [(0, 1), (1, 2), (0, 2)])


@pytest.fixture
def split3():
    """Nodes 1 and 2 linked, node 3 isolated."""
    return build_graph(3, [(0, 1)])


@pytest.fixture
def scalar_plant():
    """x+ = 1.2 x observed by node 1 only."""
    return LtiSystem(np.array([[1.2]]), (np.array([[1.0]]), np.array([[0.0]]), np.array([[0.0]])))


@pytest.fixture
def identity_plant():
    """A = I_3, node i measures coordinate i."""
    E = np.eye(3)
    return LtiSystem(E, (E[[0]], E[[1]], E[[2]]))


@pytest.fixture
def scalar_weight(path3):
    return make_weight(path3, 0.5)


def pytest_terminal_summary(terminalreporter):
    acc = sys.modules.get("test_acceptance")
    if acc is None or not acc.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(acc.RESULTS):
        terminalreporter.write_line(acc.RESULTS[n])
