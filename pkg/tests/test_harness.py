import csv
import io
import pickle

import pytest

from rlabtest.basis import BasisSpec
from rlabtest.estimator import EstimatorConfig
from rlabtest.harness import ExperimentConfig, RejectionTable, emit_plot_data, run_experiment
from rlabtest.sequential import SequentialPlan, spending_value
from rlabtest.simulator import DesignPolicy, EnvSpec

PLAN = SequentialPlan((300, 375, 450, 525, 600))
CFG = EstimatorConfig(0.6, BasisSpec(4, 2))


def _config(**kw):
    base = dict(env=EnvSpec("main_sim"), design=DesignPolicy.markov(), plan=PLAN, estimator=CFG,
                replications=8, reference_samples=5000)
    base.update(kw)
    return ExperimentConfig(**base)


def test_config_validation():
    with pytest.raises(ValueError):
        _config(methods=("proposed", "vlearning"))
    with pytest.raises(ValueError):
        _config(replications=0)
    with pytest.raises(ValueError):
        _config(methods=("obf",), plan=SequentialPlan((300, 601)))


def test_single_replicate_huge_effect():
    table = run_experiment(_config(replications=1, delta_grid=(5.0,)))
    assert table.freq("proposed", 5.0) in (0.0, 1.0)


def test_rows_and_mce():
    table = run_experiment(_config(methods=("proposed", "ttest", "obf", "crossover"), delta_grid=(0.0, 0.2)))
    assert {r["method"] for r in table.rows} == {"proposed", "ttest", "obf", "crossover"}
    assert len(table.curve("proposed", 0.2)) == 5
    assert len(table.curve("crossover", 0.2)) == 1
    assert [r["T_k"] for r in table.rows if r["method"] == "obf" and r["delta"] == 0.0] == [120, 240, 360, 480, 600]
    for r in table.rows:
        assert r["mce"] == pytest.approx((r["freq"] * (1 - r["freq"]) / 8) ** 0.5)
    cum = table.curve("proposed", 0.2)
    assert all(b >= a for a, b in zip(cum, cum[1:]))


def test_worker_count_does_not_change_results():
    cfg = _config(methods=("proposed", "ttest"), delta_grid=(0.0, 0.1), design=DesignPolicy.adaptive())
    one = run_experiment(cfg, workers=1)
    many = run_experiment(cfg, workers=4)
    assert pickle.dumps(one.to_dict()) == pickle.dumps(many.to_dict())
    assert emit_plot_data(one, PLAN) == emit_plot_data(many, PLAN)


def test_replicate_subsets_reproducible():
    from rlabtest._rng import child_seed
    from rlabtest.basis import compute_contrast
    from rlabtest.harness import _one_replicate
    from rlabtest.simulator import reference_distribution

    small, large = _config(replications=3), _config(replications=50)
    contrast = compute_contrast(CFG.basis, reference_distribution(small.env, 5000, child_seed(small.seed, 1)))
    a = _one_replicate(small, contrast, 2)
    b = _one_replicate(large, contrast, 2)
    assert pickle.dumps(a) == pickle.dumps(b)


def test_plot_data_header_and_spending():
    assert emit_plot_data(RejectionTable(10), PLAN) == "method,delta,stage,T_k,freq,mce,alpha_spend\n"
    one = RejectionTable(10, rows=[{"method": "proposed", "delta": 0.0, "stage": 1, "T_k": 300, "freq": 0.1, "mce": 0.03}])
    assert len(emit_plot_data(one, PLAN).splitlines()) == 2
    table = run_experiment(_config(replications=2))
    for row in csv.DictReader(io.StringIO(emit_plot_data(table, PLAN))):
        assert float(row["alpha_spend"]) == spending_value(PLAN, int(row["T_k"]))


def test_failures_tallied():
    # crossover with two pairs leaves no degrees of freedom: every replicate fails
    table = run_experiment(_config(methods=("crossover",), crossover_pairs=2, replications=4))
    assert table.failures[("crossover", 0.0)] == 4
    assert table.freq("crossover", 0.0) == 0.0


def test_null_final_stage_rate():
    table = run_experiment(_config(replications=200))
    assert table.freq("proposed", 0.0) == pytest.approx(0.05, abs=0.05)
