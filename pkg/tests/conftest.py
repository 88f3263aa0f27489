import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mbdiff.behavior import PAPER_BEHAVIORS, BehaviorSet, ModelParams, NodeStates
from mbdiff.netgen import Graph

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def star(d: int) -> Graph:
    return Graph(d + 1, [(0, i) for i in range(1, d + 1)])


def path(n: int) -> Graph:
    return Graph(n, [(i, i + 1) for i in range(n - 1)])


def random_graph(n: int, p: float, rng) -> Graph:
    edges = [(u, v) for u in range(n) for v in range(u + 1, n) if rng.random() < p]
    return Graph(n, edges)


@pytest.fixture
def behaviors() -> BehaviorSet:
    return PAPER_BEHAVIORS


@pytest.fixture
def fig2():
    """Four-node scenario: ``v`` (node 0) and three neighbors holding
    (1,2,3), (1,2) and (1) of the behaviors, so l = (1, 2/3, 1/3)."""
    g = star(3)
    thresholds = np.array([[0.1, 0.4, 0.6]] + [[1.0, 1.0, 1.0]] * 3)
    resource = np.array([0.6, 1.0, 1.0, 1.0])
    return g, NodeStates(resource, thresholds)


@pytest.fixture
def sticky() -> ModelParams:
    return ModelParams()


@pytest.fixture
def reevaluate() -> ModelParams:
    return ModelParams(adoption_mode="reevaluate")


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("tests.test_acceptance")
    if acceptance is None or not acceptance.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(acceptance.RESULTS):
        terminalreporter.write_line(acceptance.RESULTS[num])
