"""Comparator tests that ignore the state dynamics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy import stats

from rlabtest.data import Trajectory
from rlabtest.errors import InputError, NumericalError

# c(K, alpha) such that a one-sided O'Brien-Fleming boundary c sqrt(K / k) over
# K equal-size looks has overall level alpha. 10^6 simulated paths per entry,
# see tools/calibrate_obf.py.
OBF_CONSTANTS = {
    0.01: (2.3264, 2.3345, 2.3570, 2.3738, 2.3843, 2.3989, 2.4054, 2.4124, 2.4247, 2.4249),
    0.025: (1.9625, 1.9783, 2.0062, 2.0298, 2.0418, 2.0542, 2.0635, 2.0717, 2.0816, 2.0832),
    0.05: (1.6435, 1.6784, 1.7100, 1.7388, 1.7506, 1.7661, 1.7780, 1.7859, 1.7956, 1.7989),
    0.1: (1.2778, 1.3428, 1.3789, 1.4099, 1.4261, 1.4429, 1.4556, 1.4660, 1.4752, 1.4811),
}


class TTestResult(NamedTuple):
    t_stat: float
    p_value: float
    reject: bool


def _arms(data):
    if isinstance(data, Trajectory):
        a, y = data.actions, data.rewards
    else:
        arr = np.asarray(data, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise InputError("expected a sequence of (action, reward) pairs")
        a, y = arr[:, 0].astype(int), arr[:, 1]
    return y[a == 1], y[a == 0]


def two_sample_t(data, alpha: float = 0.05, one_sided: bool = True) -> TTestResult:
    """Welch t-test of ``mean(Y | A=1) > mean(Y | A=0)``.

    Zero spread in both arms is treated as infinite separation (or a tie).
    """
    y1, y0 = _arms(data)
    if len(y1) < 2 or len(y0) < 2:
        raise InputError("each arm needs at least two observations")
    diff = y1.mean() - y0.mean()
    se = math.sqrt(y1.var(ddof=1) / len(y1) + y0.var(ddof=1) / len(y0))
    if se == 0.0:
        if diff == 0.0:
            t, p = 0.0, 0.5 if one_sided else 1.0
        else:
            t = math.copysign(math.inf, diff)
            p = (0.0 if diff > 0 else 1.0) if one_sided else 0.0
    else:
        res = stats.ttest_ind(y1, y0, equal_var=False, alternative="greater" if one_sided else "two-sided")
        t, p = float(res.statistic), float(res.pvalue)
    return TTestResult(float(t), float(p), bool(p < alpha))


@lru_cache(maxsize=64)
def _simulated_obf_constant(K: int, alpha: float, n_paths: int = 200_000) -> float:
    rng = np.random.default_rng([20240611, K])
    walk = np.cumsum(rng.standard_normal((n_paths, K)), axis=1)
    return float(np.quantile(walk.max(axis=1) / math.sqrt(K), 1 - alpha))


def obf_constant(K: int, alpha: float) -> float:
    if K < 1:
        raise InputError("K must be >= 1")
    if K == 1:
        return float(stats.norm.ppf(1 - alpha))
    table = OBF_CONSTANTS.get(alpha)
    if table is not None and K <= len(table):
        return table[K - 1]
    return _simulated_obf_constant(K, alpha)


@dataclass(frozen=True)
class OBFResult:
    z: np.ndarray
    boundaries: np.ndarray
    first_rejection: int | None

    @property
    def rejected(self) -> bool:
        return self.first_rejection is not None


def obf_sequential(data, K: int, alpha: float = 0.05) -> OBFResult:
    """O'Brien-Fleming group-sequential z-test over ``K`` equal batches."""
    if isinstance(data, Trajectory):
        a, y = data.actions, data.rewards
    else:
        arr = np.asarray(data, dtype=float)
        a, y = arr[:, 0].astype(int), arr[:, 1]
    n = len(a)
    if K < 1 or n % K:
        raise InputError(f"{n} observations cannot be split into {K} equal batches")
    size = n // K
    c = obf_constant(K, alpha)
    zs = np.zeros(K)
    bounds = np.array([c * math.sqrt(K / k) for k in range(1, K + 1)])
    first = None
    for k in range(1, K + 1):
        ak, yk = a[: k * size], y[: k * size]
        y1, y0 = yk[ak == 1], yk[ak == 0]
        if len(y1) < 2 or len(y0) < 2:
            zs[k - 1] = 0.0
        else:
            diff = y1.mean() - y0.mean()
            se = math.sqrt(y1.var(ddof=1) / len(y1) + y0.var(ddof=1) / len(y0))
            zs[k - 1] = diff / se if se > 0 else (math.copysign(math.inf, diff) if diff else 0.0)
        if first is None and zs[k - 1] > bounds[k - 1]:
            first = k
    return OBFResult(zs, bounds, first)


@dataclass(frozen=True)
class CrossoverResult:
    tau_hat: float
    tau_10: float
    tau_01: float
    sigma2_hat: float
    m: float
    t_stat: float
    df: int
    reject: bool


def crossover_effect(blocks) -> tuple[float, float, float]:
    """``(tau, tau_10, tau_01)``: half the gap between the two order-specific pair contrasts."""
    means = np.asarray(blocks.means, dtype=float)
    treat = np.asarray(blocks.treatments, dtype=int)
    if means.shape[0] % 2 or means.shape[0] < 2:
        raise InputError("crossover needs an even, positive number of blocks")
    diff = means[1::2] - means[0::2]
    second = treat[1::2]
    if second.all() or not second.any():
        raise InputError("both treatment orders must appear among the pairs")
    tau_10 = float(diff[second == 1].mean())
    tau_01 = float(diff[second == 0].mean())
    return (tau_10 - tau_01) / 2, tau_10, tau_01


def crossover_t(blocks, alpha: float = 0.05, df_mode: str = "pairs") -> CrossoverResult:
    """Paired-block t-test from a 2x2 crossover layout.

    ``blocks`` has ``means`` and ``treatments`` for blocks 1..2n; block 2j-1
    and 2j form a pair with complementary treatments.

    The pooled variance of the n pair differences has ``n - 2`` degrees of
    freedom (``df_mode="pairs"``). ``df_mode="blocks"`` divides by ``2n - 2``
    instead; that variant is anti-conservative (null size around 0.15 at
    alpha = 0.05) and is kept only for comparison.
    """
    if df_mode not in ("pairs", "blocks"):
        raise InputError(f"unknown df_mode {df_mode!r}")
    tau, tau_10, tau_01 = crossover_effect(blocks)
    means = np.asarray(blocks.means, dtype=float)
    n = means.shape[0] // 2
    diff = means[1::2] - means[0::2]
    second = np.asarray(blocks.treatments, dtype=int)[1::2]
    n1 = int(second.sum())
    resid = np.where(second == 1, diff - tau_10, diff - tau_01)
    df = n - 2 if df_mode == "pairs" else 2 * n - 2
    if df < 1:
        raise InputError(f"{n} pairs leave no degrees of freedom for the variance")
    sigma2 = float((resid**2).sum() / df)
    m = 1.0 / n1 + 1.0 / (n - n1)
    if sigma2 <= 0:
        raise NumericalError("crossover variance estimate is zero")
    t_stat = tau / math.sqrt(sigma2 * m / 4)
    crit = stats.t.ppf(1 - alpha, df)
    return CrossoverResult(tau, tau_10, tau_01, sigma2, m, float(t_stat), df, bool(t_stat > crit))
