"""Alpha-spending boundaries from a stage-wise Gaussian bootstrap.

Each interim stage draws one Gaussian increment per bootstrap replicate, scaled
by the square root of that stage's score covariance increment, so the cost per
stage is ``O(B q^2)`` regardless of how many observations arrived.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Iterable

import numpy as np
from scipy.stats import norm

from rlabtest import kernels
from rlabtest._rng import substream
from rlabtest.basis import ContrastVector, ReferenceDistribution, compute_contrast
from rlabtest.data import Trajectory, concatenate, transition_arrays
from rlabtest.errors import InputError, NumericalError, StateError
from rlabtest.estimator import (
    CoefficientEstimate,
    EstimatorConfig,
    StageMoments,
    SuffStats,
    _batch_features,
    estimate_beta,
    estimate_tau,
    estimate_variance,
    sigma_inv_transpose_u,
    update_omega,
    update_suff_stats,
)

SPENDING_KINDS = ("alpha1", "alpha2")
# Rows per bootstrap work unit. Fixed so results do not depend on worker count.
_CHUNK = 256


@dataclass(frozen=True)
class SequentialPlan:
    stage_times: tuple
    alpha: float = 0.05
    spending: str = "alpha1"
    theta: float = 3.0
    B: int = 1000
    seed: int = 0

    def __post_init__(self):
        times = tuple(int(t) for t in self.stage_times)
        if not times:
            raise InputError("at least one stage time is required")
        if times[0] <= 0 or any(b <= a for a, b in zip(times, times[1:])):
            raise InputError(f"stage times must be positive and strictly increasing: {times}")
        if not 0 < self.alpha < 1:
            raise InputError("alpha must lie in (0, 1)")
        if self.spending not in SPENDING_KINDS:
            raise InputError(f"spending must be one of {SPENDING_KINDS}")
        if self.theta <= 0:
            raise InputError("theta must be positive")
        if self.B < 1:
            raise InputError("B must be >= 1")
        object.__setattr__(self, "stage_times", times)

    @property
    def K(self) -> int:
        return len(self.stage_times)

    @property
    def horizon(self) -> int:
        return self.stage_times[-1]


def spending_value(plan: SequentialPlan, t: float) -> float:
    """Cumulative type-I error allowed by time ``t``."""
    if t < 0:
        raise InputError(f"spending is defined for t >= 0, got {t}")
    if t == 0:
        return 0.0
    frac = t / plan.horizon
    if plan.spending == "alpha1":
        z = norm.ppf(1 - plan.alpha / 2)
        return float(2 * norm.sf(z / math.sqrt(frac)))
    return float(plan.alpha * frac**plan.theta)


def psd_sqrt(m: np.ndarray) -> np.ndarray:
    """Symmetric square root of the PSD part of ``m`` (negative eigenvalues clipped)."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InputError("psd_sqrt needs a square matrix")
    norm_m = np.linalg.norm(m)
    if np.linalg.norm(m - m.T) > 1e-8 * norm_m + 1e-12:
        raise InputError("matrix is not symmetric")
    vals, vecs = np.linalg.eigh(0.5 * (m + m.T))
    root = np.sqrt(np.clip(vals, 0.0, None))
    return (vecs * root) @ vecs.T


def upper_percentile(values, p: float) -> float:
    """Smallest element ``v`` with ``#{x > v} / n <= p``."""
    vals = np.sort(np.asarray(values, dtype=float).ravel())
    n = vals.shape[0]
    if n == 0:
        raise InputError("upper_percentile of an empty set")
    if not 0 < p < 1:
        raise InputError(f"p must lie in (0, 1), got {p}")
    allowed_above = min(int(math.floor(p * n + 1e-9)), n - 1)
    return float(vals[n - 1 - allowed_above])


@dataclass(frozen=True)
class BootstrapState:
    """Per-replicate running sums ``S_b`` and the surviving index set.

    Replicate ``b``'s Gaussian draw at stage ``k`` is row ``b`` of a ``(B, 2q)``
    block generated from the substream ``(seed, k)``.
    """

    sums: np.ndarray
    surviving: np.ndarray
    seed: object
    stage: int = 0

    @classmethod
    def start(cls, B: int, dim: int, seed) -> "BootstrapState":
        return cls(np.zeros((B, dim)), np.ones(B, dtype=bool), seed)

    @property
    def B(self) -> int:
        return self.sums.shape[0]

    @property
    def removed_fraction(self) -> float:
        return float((~self.surviving).sum()) / self.B


def _advance_sums(bs: BootstrapState, omega_star: np.ndarray, workers: int) -> np.ndarray:
    root = psd_sqrt(omega_star)
    draws = substream(bs.seed, bs.stage).standard_normal(bs.sums.shape)
    sums = bs.sums.copy()
    chunks = [slice(i, min(i + _CHUNK, bs.B)) for i in range(0, bs.B, _CHUNK)]

    def work(sl):
        sums[sl] += draws[sl] @ root

    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            list(ex.map(work, chunks))
    else:
        for sl in chunks:
            work(sl)
    return sums


def bootstrap_stage(
    bs: BootstrapState,
    omega_star: np.ndarray,
    sigma_inv_u: np.ndarray | None,
    T_k: int,
    sigma_hat: float | None,
    budget: float,
    workers: int = 1,
) -> tuple[float, BootstrapState, np.ndarray | None]:
    """One stage of the boundary recursion.

    Returns ``(threshold, new_state, z_star)``. With ``sigma_hat`` missing the
    sums still advance but no threshold is computed (NaN) and nobody is removed.
    """
    sums = _advance_sums(bs, omega_star, workers)
    nxt = replace(bs, sums=sums, stage=bs.stage + 1)
    if sigma_inv_u is None or sigma_hat is None or not sigma_hat > 0:
        return math.nan, nxt, None
    z_star = sums @ sigma_inv_u / (math.sqrt(T_k) * sigma_hat)
    alive = bs.surviving
    if budget <= 0 or not alive.any():
        return math.inf, nxt, z_star
    threshold = upper_percentile(z_star[alive], min(budget, 1 - 1e-12))
    surviving = alive & (z_star <= threshold)
    return threshold, replace(nxt, surviving=surviving), z_star


@dataclass(frozen=True)
class StageSnapshot:
    k: int
    T_k: int
    tau_hat: float
    sigma_hat: float
    z_stat: float
    threshold: float
    rejected: bool
    spending_consumed: float
    alpha_spend: float
    ridge_used: bool = False
    status: str = "ok"

    def to_dict(self) -> dict:
        def num(x):
            x = float(x)
            if math.isnan(x):
                return None
            if math.isinf(x):
                return "inf" if x > 0 else "-inf"
            return x

        return {
            "k": self.k,
            "T_k": self.T_k,
            "tau_hat": num(self.tau_hat),
            "sigma_hat": num(self.sigma_hat),
            "z": num(self.z_stat),
            "threshold": num(self.threshold),
            "rejected": self.rejected,
            "spending_consumed": self.spending_consumed,
            "alpha_spend": self.alpha_spend,
            "ridge_used": self.ridge_used,
            "status": self.status,
        }


class SequentialTest:
    """Online driver: feed one batch per interim stage via :meth:`update`."""

    def __init__(
        self,
        plan: SequentialPlan,
        cfg: EstimatorConfig,
        reference: ReferenceDistribution | ContrastVector,
        workers: int = 1,
    ):
        self.plan = plan
        self.cfg = cfg
        if isinstance(reference, ContrastVector):
            self.contrast = reference
        else:
            self.contrast = compute_contrast(cfg.basis, reference)
        if self.contrast.q != cfg.q:
            raise InputError("contrast length does not match the basis")
        self.workers = workers
        self.stats = SuffStats.zeros(cfg.q)
        self.boot = BootstrapState.start(plan.B, 2 * cfg.q, plan.seed)
        self.snapshots: list[StageSnapshot] = []
        self.moments: list[StageMoments] = []
        self.beta: CoefficientEstimate | None = None
        self._pending: list = []
        self.rejected = False

    @property
    def stage(self) -> int:
        return len(self.snapshots)

    @property
    def done(self) -> bool:
        return self.rejected or self.stage >= self.plan.K

    def update(self, batch) -> StageSnapshot:
        if self.done:
            raise StateError("the test has already stopped")
        k = self.stage + 1
        T_k = self.plan.stage_times[k - 1]
        arrays = transition_arrays(batch)
        n = 0 if arrays is None else len(arrays[2])
        if self.stats.t + n != T_k:
            raise InputError(f"stage {k} expects data up to t={T_k}, batch ends at t={self.stats.t + n}")
        self.stats = update_suff_stats(self.stats, batch, self.cfg)
        if n:
            self._pending.append(batch)
        alpha_k = spending_value(self.plan, T_k)
        spent = self.boot.removed_fraction
        budget = (alpha_k - spent) / (1 - spent)

        try:
            self.beta = estimate_beta(self.stats, self.cfg)
        except NumericalError:
            # Without coefficients no scores exist; carry the batch to the next stage.
            snap = StageSnapshot(k, T_k, math.nan, math.nan, math.nan, math.nan, False,
                                 spent, alpha_k, status="no-decision: singular design")
            self.snapshots.append(snap)
            return snap

        pending = self._pending_batch()
        self.stats = update_omega(self.stats, pending, self.beta, self.cfg)
        self._pending = []
        tau = estimate_tau(self.beta, self.contrast)
        try:
            var = estimate_variance(self.stats, self.contrast, tau, T_k, self.beta)
        except NumericalError:
            _, self.boot, _ = bootstrap_stage(self.boot, self.stats.omega_star, None, T_k, None, budget, self.workers)
            snap = StageSnapshot(k, T_k, tau, math.nan, math.nan, math.nan, False,
                                 spent, alpha_k, self.beta.ridge_used, status="no-decision: degenerate variance")
            self.snapshots.append(snap)
            return snap

        threshold, self.boot, _ = bootstrap_stage(
            self.boot, self.stats.omega_star, var.sigma_inv_u, T_k, var.sigma_hat, budget, self.workers
        )
        rejected = bool(var.z > threshold)
        self.rejected = rejected
        self.moments.append(StageMoments(var.sigma_inv_u, self.stats.omega.copy(), var.sigma_hat, T_k))
        snap = StageSnapshot(
            k, T_k, tau, var.sigma_hat, var.z, threshold, rejected,
            self.boot.removed_fraction, alpha_k, self.beta.ridge_used,
        )
        self.snapshots.append(snap)
        return snap

    def _pending_batch(self):
        if not self._pending:
            return []
        if len(self._pending) == 1:
            return self._pending[0]
        if all(isinstance(b, Trajectory) for b in self._pending):
            return concatenate(self._pending)
        parts = []
        for b in self._pending:
            parts.extend(b.observations() if isinstance(b, Trajectory) else list(b))
        return parts


def _stage_batches(stream, plan: SequentialPlan) -> Iterable:
    if isinstance(stream, Trajectory):
        prev = 0
        for T_k in plan.stage_times:
            if T_k > len(stream):
                return
            yield stream.window(prev, T_k)
            prev = T_k
    else:
        yield from stream


def run_sequential_test(
    stream,
    plan: SequentialPlan,
    cfg: EstimatorConfig,
    g: ReferenceDistribution | ContrastVector,
    workers: int = 1,
) -> list[StageSnapshot]:
    """Run stages until the first rejection or the last stage.

    ``stream`` is a Trajectory (split at the stage times) or an iterable of
    per-stage batches. Stages the data does not reach are simply absent.
    """
    test = SequentialTest(plan, cfg, g, workers=workers)
    for batch in _stage_batches(stream, plan):
        test.update(batch)
        if test.done:
            break
    return test.snapshots


# Classical wild bootstrap (oracle) -------------------------------------------


@dataclass(frozen=True)
class WildBootstrapConfig:
    multiplier: str = "gaussian"
    B: int = 1000
    seed: int = 0

    def __post_init__(self):
        # "constant" (all multipliers 1) is degenerate and only meant for tests.
        if self.multiplier not in ("gaussian", "rademacher", "constant"):
            raise InputError(f"unknown multiplier {self.multiplier!r}")


def classical_wild_bootstrap(
    data,
    beta: CoefficientEstimate,
    cfg: EstimatorConfig,
    wcfg: WildBootstrapConfig,
    u: ContrastVector,
    sigma_hat: float,
    t: int | None = None,
) -> np.ndarray:
    """Multiplier bootstrap draws of the standardised statistic at time ``t``.

    Draws one multiplier per observation and replicate, so the cost is
    ``O(B t q)``; used as an independent check on the stage-wise scheme.
    """
    fb = _batch_features(data, cfg)
    if fb is None:
        raise StateError("classical bootstrap needs the full observation history")
    feats, next_feats, a, y = fb
    n = len(a)
    t = n if t is None else t
    if t != n:
        raise InputError(f"history has {n} observations, t={t}")
    stats = update_suff_stats(SuffStats.zeros(cfg.q), data, cfg)
    w = sigma_inv_transpose_u(stats, u, beta)
    scratch = np.zeros((2 * cfg.q, 2 * cfg.q))
    scores = kernels.score_outer(feats, next_feats, a, y, beta.beta0, beta.beta1, cfg.gamma, scratch)
    proj = scores @ w
    rng = substream(wcfg.seed, 0)
    out = np.empty(wcfg.B)
    step = max(1, 2_000_000 // max(n, 1))
    for start in range(0, wcfg.B, step):
        stop = min(start + step, wcfg.B)
        if wcfg.multiplier == "gaussian":
            zeta = rng.standard_normal((stop - start, n))
        elif wcfg.multiplier == "rademacher":
            zeta = rng.integers(0, 2, size=(stop - start, n)) * 2.0 - 1.0
        else:
            out[start:stop] = proj.sum()
            continue
        out[start:stop] = zeta @ proj
    return out * math.sqrt(t) / (t * sigma_hat)
