"""Monte-Carlo rejection-rate experiments.

Replicate ``r`` draws its trajectory noise from ``(seed, 0, r, 0)`` and its
bootstrap from ``(seed, 0, r, 1)``, independently of ``delta``; the grid over
``delta`` therefore uses common random numbers, which keeps power curves
smooth. The reference distribution comes from ``(seed, 1)``.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from rlabtest._rng import child_seed
from rlabtest.baselines import crossover_t, obf_sequential, two_sample_t
from rlabtest.basis import compute_contrast
from rlabtest.estimator import EstimatorConfig, fit
from rlabtest.sequential import SequentialPlan, run_sequential_test, spending_value
from rlabtest.simulator import (
    CrossoverSpec,
    DesignPolicy,
    EnvSpec,
    reference_distribution,
    simulate,
    simulate_crossover,
)

METHODS = ("proposed", "ttest", "obf", "crossover")


@dataclass(frozen=True)
class ExperimentConfig:
    env: EnvSpec
    design: DesignPolicy
    plan: SequentialPlan
    estimator: EstimatorConfig
    replications: int = 500
    methods: tuple = ("proposed",)
    delta_grid: tuple = (0.0,)
    seed: int = 0
    reference_samples: int = 100_000
    crossover_pairs: int = 10

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if not self.delta_grid:
            raise ValueError("delta_grid must not be empty")
        bad = set(self.methods) - set(METHODS)
        if bad:
            raise ValueError(f"unknown methods {sorted(bad)}")
        object.__setattr__(self, "methods", tuple(self.methods))
        object.__setattr__(self, "delta_grid", tuple(float(d) for d in self.delta_grid))
        if "obf" in self.methods and self.plan.horizon % self.plan.K:
            raise ValueError("obf needs a horizon divisible by the number of stages")
        if "crossover" in self.methods and self.plan.horizon % (2 * self.crossover_pairs):
            raise ValueError("crossover needs a horizon divisible by 2 * crossover_pairs")

    @property
    def design_for_run(self) -> DesignPolicy:
        if self.design.kind == "adaptive" and not self.design.stage_times:
            return replace(self.design, stage_times=self.plan.stage_times)
        return self.design


@dataclass
class RejectionTable:
    """Rejection frequencies keyed by ``(method, delta, stage)``.

    ``proposed`` and ``obf`` rows are cumulative (rejected at or before the
    stage); ``ttest`` rows are the fixed-sample test applied at each look;
    ``crossover`` has a single row at the horizon.
    """

    replications: int
    rows: list = field(default_factory=list)
    failures: dict = field(default_factory=dict)

    def freq(self, method: str, delta: float, stage: int | None = None) -> float:
        rows = [r for r in self.rows if r["method"] == method and r["delta"] == delta]
        if not rows:
            raise KeyError((method, delta, stage))
        if stage is None:
            return max(rows, key=lambda r: r["stage"])["freq"]
        for r in rows:
            if r["stage"] == stage:
                return r["freq"]
        raise KeyError((method, delta, stage))

    def curve(self, method: str, delta: float) -> list[float]:
        rows = sorted(
            (r for r in self.rows if r["method"] == method and r["delta"] == delta),
            key=lambda r: r["stage"],
        )
        return [r["freq"] for r in rows]

    def to_dict(self) -> dict:
        return {
            "replications": self.replications,
            "rows": self.rows,
            "failures": {f"{m}|{d}": n for (m, d), n in sorted(self.failures.items())},
        }


def _one_replicate(cfg: ExperimentConfig, contrast, rep: int) -> dict:
    """Per-method, per-delta stage indicators for one replicate."""
    plan = cfg.plan
    K = plan.K
    sim_seed = child_seed(cfg.seed, 0, rep, 0)
    boot_seed = child_seed(cfg.seed, 0, rep, 1)
    rep_plan = replace(plan, seed=boot_seed)
    est_cfg = cfg.estimator
    design = cfg.design_for_run
    out = {}
    for di, delta in enumerate(cfg.delta_grid):
        env = replace(cfg.env, delta=delta)
        needs_traj = any(m in cfg.methods for m in ("proposed", "ttest", "obf"))
        traj = None
        if needs_traj:
            traj = simulate(env, design, plan.horizon, sim_seed,
                            coupled_estimator=lambda prefix: fit(prefix, est_cfg)[1])
        for method in cfg.methods:
            hits = np.zeros(K if method != "crossover" else 1, dtype=np.int8)
            failed = False
            try:
                if method == "proposed":
                    snaps = run_sequential_test(traj, rep_plan, est_cfg, contrast)
                    first = next((s.k for s in snaps if s.rejected), None)
                    if first is not None:
                        hits[first - 1 :] = 1
                    failed = any(s.status != "ok" for s in snaps)
                elif method == "ttest":
                    for k, T_k in enumerate(plan.stage_times):
                        hits[k] = two_sample_t(traj.window(0, T_k), plan.alpha).reject
                elif method == "obf":
                    res = obf_sequential(traj, K, plan.alpha)
                    if res.first_rejection is not None:
                        hits[res.first_rejection - 1 :] = 1
                else:
                    spec = CrossoverSpec(cfg.crossover_pairs, plan.horizon // (2 * cfg.crossover_pairs), env)
                    hits[0] = crossover_t(simulate_crossover(spec, sim_seed), plan.alpha).reject
            except (ArithmeticError, ValueError, RuntimeError):
                hits[:] = 0
                failed = True
            out[(method, di)] = (hits, failed)
    return out


def _run_chunk(args):
    cfg, contrast, reps = args
    return [_one_replicate(cfg, contrast, r) for r in reps]


def _stage_times(cfg: ExperimentConfig, method: str) -> tuple:
    plan = cfg.plan
    if method == "obf":
        step = plan.horizon // plan.K
        return tuple(step * k for k in range(1, plan.K + 1))
    if method == "crossover":
        return (plan.horizon,)
    return plan.stage_times


def run_experiment(cfg: ExperimentConfig, workers: int = 1) -> RejectionTable:
    ref = reference_distribution(cfg.env, cfg.reference_samples, child_seed(cfg.seed, 1))
    contrast = compute_contrast(cfg.estimator.basis, ref)
    reps = list(range(cfg.replications))
    if workers > 1:
        size = math.ceil(len(reps) / (4 * workers))
        chunks = [reps[i : i + size] for i in range(0, len(reps), size)]
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = [r for part in ex.map(_run_chunk, [(cfg, contrast, c) for c in chunks]) for r in part]
    else:
        results = _run_chunk((cfg, contrast, reps))

    R = cfg.replications
    table = RejectionTable(R)
    for method in cfg.methods:
        times = _stage_times(cfg, method)
        for di, delta in enumerate(cfg.delta_grid):
            hits = np.stack([res[(method, di)][0] for res in results])
            fails = sum(res[(method, di)][1] for res in results)
            table.failures[(method, delta)] = int(fails)
            for k, T_k in enumerate(times):
                p = float(hits[:, k].mean())
                table.rows.append({
                    "method": method,
                    "delta": delta,
                    "stage": k + 1,
                    "T_k": int(T_k),
                    "freq": p,
                    "mce": math.sqrt(p * (1 - p) / R),
                })
    return table


def emit_plot_data(table: RejectionTable, plan: SequentialPlan | None = None) -> str:
    """Long-format CSV of a rejection table with the spending curve alongside."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["method", "delta", "stage", "T_k", "freq", "mce", "alpha_spend"])
    for r in table.rows:
        spend = "" if plan is None else repr(spending_value(plan, r["T_k"]))
        writer.writerow([r["method"], repr(r["delta"]), r["stage"], r["T_k"], repr(r["freq"]), repr(r["mce"]), spend])
    return buf.getvalue()
