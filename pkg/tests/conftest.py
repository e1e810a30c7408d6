import numpy as np
import pytest

from rlabtest import BasisSpec, EstimatorConfig
from rlabtest.data import Trajectory


@pytest.fixture
def constant_cfg():
    return EstimatorConfig(0.5, BasisSpec(0, 1))


@pytest.fixture
def hand_batch():
    """Four steps, actions (1, 0, 1, 0), rewards (2, 1, 4, 3)."""
    states = np.array([0.1, -0.2, 0.3, 0.0, 0.5])
    return Trajectory(states, [1, 0, 1, 0], [2.0, 1.0, 4.0, 3.0])


def random_trajectory(n, d=2, seed=0):
    rng = np.random.default_rng(seed)
    return Trajectory(rng.normal(scale=0.5, size=(n + 1, d)), rng.integers(0, 2, n), rng.normal(size=n))


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for key in sorted(RESULTS, key=int):
            terminalreporter.write_line(RESULTS[key])
