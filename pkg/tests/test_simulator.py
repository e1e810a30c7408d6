import numpy as np
import pytest

from rlabtest.errors import InputError
from rlabtest.estimator import CoefficientEstimate
from rlabtest.simulator import (
    CrossoverSpec,
    DesignPolicy,
    EnvSpec,
    reference_distribution,
    simulate,
    simulate_crossover,
)


def _lag1(x):
    x = x - x.mean()
    return float(x[1:] @ x[:-1] / (x @ x))


def test_main_sim_noise_free_step():
    env = EnvSpec("main_sim", delta=0.1, noise_scale=0.0)
    traj = simulate(env, DesignPolicy.fixed([1, 0]), 2, seed=0, s0=[0.0, 0.0])
    np.testing.assert_allclose(traj.states[1], [0.1, 0.1], atol=1e-15)
    assert traj.rewards[0] == 1.0
    assert traj.rewards[1] == pytest.approx(1.1, abs=1e-15)


def test_example2_stationary_moments():
    traj = simulate(EnvSpec("example2"), DesignPolicy.markov(), 40_000, seed=1)
    y = traj.rewards[1000:]
    assert abs(y.mean()) < 0.02
    assert y.var() == pytest.approx(1 / 3, abs=0.02)


def test_example2_action_enters_next_state():
    env = EnvSpec("example2", delta=1.0, noise_scale=0.0)
    traj = simulate(env, DesignPolicy.fixed([1, 0, 0]), 3, s0=[0.0])
    np.testing.assert_allclose(traj.rewards, [0.0, 1.0, 0.5])


def test_alternating_actions():
    traj = simulate(EnvSpec("main_sim"), DesignPolicy.alternating(), 101, seed=3)
    np.testing.assert_array_equal(traj.actions, np.arange(101) % 2)


def test_example1_serially_uncorrelated():
    traj = simulate(EnvSpec("example1", delta=0.5), DesignPolicy.markov(), 10_000, seed=4)
    assert abs(_lag1(traj.states[:, 0])) <= 0.03


def test_example2_ar_coefficient():
    traj = simulate(EnvSpec("example2", delta=0.5), DesignPolicy.fixed(np.zeros(10_000, int)), 10_000, seed=5)
    assert _lag1(traj.states[:, 0]) == pytest.approx(0.5, abs=0.03)


def test_markov_design_rate_and_determinism():
    a = simulate(EnvSpec("main_sim"), DesignPolicy.markov(0.3), 5000, seed=6)
    b = simulate(EnvSpec("main_sim"), DesignPolicy.markov(0.3), 5000, seed=6)
    np.testing.assert_array_equal(a.states, b.states)
    np.testing.assert_array_equal(a.actions, b.actions)
    assert a.actions.mean() == pytest.approx(0.3, abs=0.03)


def test_noise_shared_across_delta():
    a = simulate(EnvSpec("example1", delta=0.0), DesignPolicy.markov(), 300, seed=7)
    b = simulate(EnvSpec("example1", delta=0.4), DesignPolicy.markov(), 300, seed=7)
    np.testing.assert_array_equal(a.actions, b.actions)
    np.testing.assert_allclose(b.rewards - a.rewards, 0.4 * a.actions, atol=1e-15)


def test_adaptive_needs_estimator():
    with pytest.raises(InputError):
        simulate(EnvSpec("main_sim"), DesignPolicy.adaptive(stage_times=(50,)), 100)


def test_adaptive_calls_estimator_at_stage_times():
    seen = []

    def favour_treatment(prefix):
        seen.append(len(prefix))
        diff = np.zeros(9)
        diff[0] = 100.0
        return CoefficientEstimate(np.zeros(9), diff, False)

    design = DesignPolicy.adaptive(0.1, stage_times=(1000, 2000, 3000))
    traj = simulate(EnvSpec("main_sim"), design, 20_000, seed=8, coupled_estimator=favour_treatment)
    assert seen == [1000, 2000, 3000]
    assert traj.actions[:1000].mean() == pytest.approx(0.5, abs=0.05)
    # b = eps/2 + (1 - eps) = 0.95 once the value difference is positive everywhere
    assert traj.actions[3000:].mean() == pytest.approx(0.95, abs=0.01)


def test_adaptive_probability_bounds():
    def favour_control(prefix):
        diff = np.zeros(9)
        diff[0] = -100.0
        return CoefficientEstimate(np.zeros(9), diff, False)

    design = DesignPolicy.adaptive(0.2, stage_times=(100,))
    traj = simulate(EnvSpec("main_sim"), design, 20_100, seed=9, coupled_estimator=favour_control)
    assert traj.actions[100:].mean() == pytest.approx(0.1, abs=0.01)


def test_design_validation():
    with pytest.raises(InputError):
        DesignPolicy.markov(1.0)
    with pytest.raises(InputError):
        DesignPolicy.adaptive(0.0)
    with pytest.raises(InputError):
        EnvSpec("example3")
    with pytest.raises(InputError):
        simulate(EnvSpec("example1"), DesignPolicy.fixed([0, 1]), 5)


def test_reference_distribution_matches_initial_law():
    g = reference_distribution(EnvSpec("main_sim"), 100_000, seed=0)
    assert g.states.shape == (100_000, 2)
    np.testing.assert_allclose(g.states.std(axis=0), [0.25, 0.25], rtol=0.01)
    g1 = reference_distribution(EnvSpec("example1"), 100_000, seed=0)
    assert g1.states.std() == pytest.approx(0.5, rel=0.01)


def test_crossover_single_pair():
    blocks = simulate_crossover(CrossoverSpec(1, 10, EnvSpec("main_sim")), seed=1)
    assert blocks.means.shape == (2,)
    assert sorted(blocks.treatments) == [0, 1]


def test_crossover_deterministic_rewards():
    spec = CrossoverSpec(6, 1, EnvSpec("example1", delta=1.0, noise_scale=0.0))
    blocks = simulate_crossover(spec, seed=2)
    np.testing.assert_array_equal(blocks.means, blocks.treatments.astype(float))
    np.testing.assert_array_equal(blocks.treatments[0::2] + blocks.treatments[1::2], np.ones(6))


def test_crossover_null_pair_difference():
    spec = CrossoverSpec(10, 30, EnvSpec("main_sim"))
    diffs = [np.mean(b.means[1::2] - b.means[0::2]) for b in (simulate_crossover(spec, seed=s) for s in range(300))]
    assert abs(np.mean(diffs)) < 3 * np.std(diffs) / np.sqrt(len(diffs))
