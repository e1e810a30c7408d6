import math
import pickle

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import ks_2samp

from rlabtest.basis import BasisSpec, ReferenceDistribution, compute_contrast
from rlabtest.data import Trajectory
from rlabtest.errors import InputError, StateError
from rlabtest.estimator import (
    EstimatorConfig,
    estimate_tau,
    estimate_variance,
    fit,
    update_omega,
)
from rlabtest.sequential import (
    BootstrapState,
    SequentialPlan,
    SequentialTest,
    WildBootstrapConfig,
    bootstrap_stage,
    classical_wild_bootstrap,
    psd_sqrt,
    run_sequential_test,
    spending_value,
    upper_percentile,
)
from rlabtest.simulator import DesignPolicy, EnvSpec, simulate

CFG = EstimatorConfig(0.6, BasisSpec(4, 2))
TIMES = (300, 375, 450, 525, 600)


def _stage_one(T=300, seed=4, delta=0.0):
    traj = simulate(EnvSpec("main_sim", delta=delta), DesignPolicy.markov(), T, seed=seed)
    u = compute_contrast(CFG.basis, ReferenceDistribution(traj.states))
    stats, beta = fit(traj, CFG)
    stats = update_omega(stats, traj, beta, CFG)
    var = estimate_variance(stats, u, estimate_tau(beta, u), T, beta)
    return traj, u, stats, beta, var


# spending ---------------------------------------------------------------------


def test_plan_validation():
    with pytest.raises(InputError):
        SequentialPlan((300, 300))
    with pytest.raises(InputError):
        SequentialPlan((100,), alpha=1.5)
    with pytest.raises(InputError):
        SequentialPlan((100,), spending="pocock")
    assert SequentialPlan(TIMES).K == 5


@pytest.mark.parametrize("kind", ["alpha1", "alpha2"])
def test_spending_endpoints(kind):
    plan = SequentialPlan(TIMES, spending=kind)
    assert spending_value(plan, 0) == 0.0
    assert spending_value(plan, 600) == pytest.approx(0.05, abs=1e-15)


def test_alpha2_half_horizon():
    plan = SequentialPlan((100, 200), spending="alpha2", theta=3.0)
    assert spending_value(plan, 100) == pytest.approx(0.00625, abs=1e-16)


def test_alpha1_quarter_horizon():
    # 2 - 2 Phi(2 z_{0.975}) at 40 digits
    plan = SequentialPlan((100, 400))
    assert spending_value(plan, 100) == pytest.approx(8.8575438321403879978e-05, rel=1e-10)
    assert spending_value(SequentialPlan(TIMES), 300) == pytest.approx(0.0055745966807844110079, rel=1e-10)


@pytest.mark.parametrize("kind", ["alpha1", "alpha2"])
def test_spending_monotone(kind):
    plan = SequentialPlan(TIMES, spending=kind)
    vals = [spending_value(plan, t) for t in range(0, 601, 25)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))


# psd_sqrt / percentile ---------------------------------------------------------


def test_psd_sqrt_examples():
    np.testing.assert_allclose(psd_sqrt(np.eye(4)), np.eye(4), atol=1e-15)
    np.testing.assert_allclose(psd_sqrt(np.diag([4.0, 9.0, 16.0])), np.diag([2.0, 3.0, 4.0]), atol=1e-14)
    v = np.array([1.0, -2.0, 0.5])
    np.testing.assert_allclose(psd_sqrt(np.outer(v, v)), np.outer(v, v) / np.linalg.norm(v), atol=1e-12)


def test_psd_sqrt_rejects_asymmetric():
    with pytest.raises(InputError):
        psd_sqrt(np.array([[1.0, 2.0], [0.0, 1.0]]))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 18), st.integers(1, 30), st.integers(0, 2**31))
def test_psd_sqrt_reconstruction(dim, rank, seed):
    x = np.random.default_rng(seed).normal(size=(rank, dim))
    m = x.T @ x
    r = psd_sqrt(m)
    np.testing.assert_allclose(r @ r, m, atol=1e-8 * max(1.0, np.linalg.norm(m)))
    np.testing.assert_allclose(r, r.T, atol=1e-12 * max(1.0, np.linalg.norm(m)))


def test_upper_percentile_examples():
    assert upper_percentile(np.arange(1, 101), 0.05) == 95
    assert upper_percentile([3, 1, 2], 1 / 3) == 2
    vals = np.random.default_rng(0).normal(size=37)
    assert upper_percentile(vals, 1 - 1e-12) == vals.min()


@settings(max_examples=50)
@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=60), st.floats(0.001, 0.999))
def test_upper_percentile_definition(values, p):
    v = upper_percentile(values, p)
    arr = np.asarray(values)
    n = len(arr)
    assert (arr > v).sum() / n <= p + 1e-12
    smaller = arr[arr < v]
    if smaller.size:
        assert (arr > smaller.max()).sum() / n > p - 1e-12


# bootstrap --------------------------------------------------------------------


def test_budget_exhausted_gives_inf():
    _, u, stats, beta, var = _stage_one()
    bs = BootstrapState.start(200, 2 * CFG.q, 1)
    thr, new, _ = bootstrap_stage(bs, stats.omega_star, var.sigma_inv_u, 300, var.sigma_hat, 0.0)
    assert thr == math.inf
    assert new.surviving.all()


def test_stage_one_bootstrap_variance():
    _, u, stats, beta, var = _stage_one()
    bs = BootstrapState.start(10_000, 2 * CFG.q, 11)
    _, _, z = bootstrap_stage(bs, stats.omega_star, var.sigma_inv_u, 300, var.sigma_hat, 0.05)
    assert 0.97 <= z.var() <= 1.03


def test_removal_tracks_spending():
    traj = simulate(EnvSpec("main_sim"), DesignPolicy.markov(), 600, seed=2)
    plan = SequentialPlan(TIMES, B=2000, seed=5)
    test = SequentialTest(plan, CFG, ReferenceDistribution(traj.states))
    prev = 0
    for k, T_k in enumerate(TIMES, start=1):
        snap = test.update(traj.window(prev, T_k))
        prev = T_k
        if snap.rejected:
            break
        assert abs(snap.spending_consumed - spending_value(plan, T_k)) <= k / plan.B + 1e-12


def test_bootstrap_deterministic_across_workers():
    _, u, stats, beta, var = _stage_one()
    outs = []
    for workers in (1, 3, 8):
        bs = BootstrapState.start(3000, 2 * CFG.q, 21)
        thr, new, z = bootstrap_stage(bs, stats.omega_star, var.sigma_inv_u, 300, var.sigma_hat, 0.01, workers)
        outs.append(pickle.dumps((thr, new.sums, new.surviving, z)))
    assert outs[0] == outs[1] == outs[2]


def test_run_deterministic_across_workers():
    traj = simulate(EnvSpec("main_sim", delta=0.05), DesignPolicy.markov(), 600, seed=3)
    g = ReferenceDistribution(traj.states)
    plan = SequentialPlan(TIMES, seed=9)
    a = run_sequential_test(traj, plan, CFG, g, workers=1)
    b = run_sequential_test(traj, plan, CFG, g, workers=4)
    assert pickle.dumps([s.to_dict() for s in a]) == pickle.dumps([s.to_dict() for s in b])


def test_scalable_matches_classical_bootstrap():
    traj, u, stats, beta, var = _stage_one(seed=17)
    bs = BootstrapState.start(5000, 2 * CFG.q, 1)
    _, _, z_scalable = bootstrap_stage(bs, stats.omega_star, var.sigma_inv_u, 300, var.sigma_hat, 0.05)
    z_classical = classical_wild_bootstrap(traj, beta, CFG, WildBootstrapConfig("gaussian", 5000, 2), u, var.sigma_hat)
    assert ks_2samp(z_scalable, z_classical).statistic <= 0.05


def test_classical_bootstrap_unit_variance():
    traj, u, stats, beta, var = _stage_one(seed=18)
    z = classical_wild_bootstrap(traj, beta, CFG, WildBootstrapConfig("gaussian", 5000, 3), u, var.sigma_hat)
    assert 0.95 <= z.var() <= 1.05
    z = classical_wild_bootstrap(traj, beta, CFG, WildBootstrapConfig("rademacher", 5000, 3), u, var.sigma_hat)
    assert 0.95 <= z.var() <= 1.05


def test_classical_bootstrap_degenerate_cases():
    traj, u, stats, beta, var = _stage_one(seed=19)
    z = classical_wild_bootstrap(traj, beta, CFG, WildBootstrapConfig("constant", 50, 0), u, var.sigma_hat)
    assert np.all(z == z[0])
    flat = Trajectory(np.zeros((301, 2)), traj.actions, np.zeros(300))
    cfg = EstimatorConfig(0.6, BasisSpec(0, 2))
    zero_beta = fit(flat, cfg)[1]
    z = classical_wild_bootstrap(flat, zero_beta, cfg, WildBootstrapConfig(B=20), compute_contrast(cfg.basis, ReferenceDistribution.at([0, 0])), 1.0)
    np.testing.assert_array_equal(z, np.zeros(20))


# sequential driver ------------------------------------------------------------


def _duplicate_arm_trajectory(period=40, cycles=10, seed=0):
    """States cycle with a fixed period; arms alternate by cycle, so every
    (s, y, s') appears once under each arm."""
    rng = np.random.default_rng(seed)
    base = rng.normal(scale=0.5, size=(period, 2))
    rewards = rng.normal(size=period)
    states = np.vstack([base] * cycles + [base[:1]])
    actions = np.repeat(np.arange(cycles) % 2, period)
    return Trajectory(states, actions, np.tile(rewards, cycles))


def test_duplicate_arms_never_reject():
    traj = _duplicate_arm_trajectory()
    plan = SequentialPlan((80, 160, 240, 320, 400), seed=1)
    snaps = run_sequential_test(traj, plan, CFG, ReferenceDistribution(traj.states))
    assert len(snaps) == 5
    for s in snaps:
        assert s.z_stat == 0.0 and s.tau_hat == 0.0
        assert not s.rejected


def test_snapshot_invariants():
    traj = simulate(EnvSpec("main_sim", delta=0.3), DesignPolicy.markov(), 600, seed=5)
    plan = SequentialPlan(TIMES, seed=2)
    snaps = run_sequential_test(traj, plan, CFG, ReferenceDistribution(traj.states))
    spent = [s.spending_consumed for s in snaps]
    assert all(b >= a for a, b in zip(spent, spent[1:]))
    assert spent[-1] <= plan.alpha + 1 / plan.B
    for s in snaps:
        if s.rejected:
            assert s.z_stat > s.threshold
    assert snaps[-1].rejected
    assert all(not s.rejected for s in snaps[:-1])


def test_batch_must_end_at_stage_time():
    traj = simulate(EnvSpec("main_sim"), DesignPolicy.markov(), 600, seed=1)
    test = SequentialTest(SequentialPlan(TIMES), CFG, ReferenceDistribution(traj.states))
    with pytest.raises(InputError):
        test.update(traj.window(0, 250))


def test_update_after_stop():
    traj = simulate(EnvSpec("main_sim"), DesignPolicy.markov(), 300, seed=1)
    test = SequentialTest(SequentialPlan((300,)), CFG, ReferenceDistribution(traj.states))
    test.update(traj)
    with pytest.raises(StateError):
        test.update(traj.window(0, 0))


def test_singular_stage_is_carried_forward():
    traj = simulate(EnvSpec("main_sim"), DesignPolicy.markov(), 400, seed=6)
    actions = traj.actions.copy()
    actions[:100] = 1
    traj = Trajectory(traj.states, actions, traj.rewards)
    plan = SequentialPlan((100, 400), seed=3)
    snaps = run_sequential_test(traj, plan, CFG, ReferenceDistribution(traj.states))
    assert snaps[0].status.startswith("no-decision")
    assert snaps[1].status == "ok"
    # omega after the carried stage equals a single-stage fit of all 400 rows
    single = run_sequential_test(traj, SequentialPlan((400,), seed=3), CFG, ReferenceDistribution(traj.states))
    assert snaps[1].sigma_hat == pytest.approx(single[0].sigma_hat, rel=1e-10)


def test_stream_of_observation_batches():
    traj = simulate(EnvSpec("main_sim", delta=0.1), DesignPolicy.markov(), 600, seed=8)
    plan = SequentialPlan(TIMES, seed=4)
    g = ReferenceDistribution(traj.states)
    bounds = (0,) + TIMES
    batches = [traj.window(a, b).observations() for a, b in zip(bounds, bounds[1:])]
    a = run_sequential_test(traj, plan, CFG, g)
    b = run_sequential_test(batches, plan, CFG, g)
    for x, y in zip(a, b):
        assert x.z_stat == pytest.approx(y.z_stat, rel=1e-10)
        assert x.rejected == y.rejected


def test_partial_data_stops_early():
    traj = simulate(EnvSpec("main_sim"), DesignPolicy.markov(), 400, seed=8)
    snaps = run_sequential_test(traj, SequentialPlan(TIMES), CFG, ReferenceDistribution(traj.states))
    assert [s.T_k for s in snaps] == [300, 375] or snaps[-1].rejected
