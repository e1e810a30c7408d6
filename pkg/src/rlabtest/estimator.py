"""TD-learning estimator of the integrated value difference.

The Q-function of each constant policy is modelled as ``Psi(s)^T beta_a`` and
fitted from the Bellman estimating equation

    sum_j Psi(S_j) 1{A_j = a} {Psi(S_j) - gamma Psi(S_{j+1})}^T beta_a
        = sum_j Psi(S_j) 1{A_j = a} Y_j.

Everything the sequential test needs is kept in :class:`SuffStats`, which is
updated one batch at a time so that no observation has to be revisited.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from rlabtest import kernels
from rlabtest.basis import BasisSpec, ContrastVector, ReferenceDistribution, basis_eval
from rlabtest.data import Observation, transition_arrays
from rlabtest.errors import InputError, NumericalError, StateError

RCOND_THRESHOLD = 1e-12


@dataclass(frozen=True)
class EstimatorConfig:
    gamma: float
    basis: BasisSpec
    ridge_epsilon: float = 1e-8

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise InputError(f"gamma must lie in (0, 1), got {self.gamma}")
        if self.ridge_epsilon < 0:
            raise InputError("ridge_epsilon must be nonnegative")

    @property
    def q(self) -> int:
        return self.basis.q


@dataclass(frozen=True)
class SuffStats:
    """Online accumulators.

    ``sigma_sum[a]`` and ``eta_sum[a]`` hold unnormalised sums over all
    transitions seen so far; the running means are exposed as properties.
    ``omega`` is the running mean of score outer products as of ``t_omega``
    and ``omega_star`` the unnormalised increment of the latest stage.
    """

    t: int
    sigma_sum: np.ndarray
    eta_sum: np.ndarray
    omega: np.ndarray
    omega_star: np.ndarray
    t_omega: int = 0

    @classmethod
    def zeros(cls, q: int) -> "SuffStats":
        return cls(
            t=0,
            sigma_sum=np.zeros((2, q, q)),
            eta_sum=np.zeros((2, q)),
            omega=np.zeros((2 * q, 2 * q)),
            omega_star=np.zeros((2 * q, 2 * q)),
        )

    @property
    def q(self) -> int:
        return self.eta_sum.shape[1]

    def _mean(self, arr):
        if self.t == 0:
            return np.zeros_like(arr)
        return arr / self.t

    @property
    def sigma0(self) -> np.ndarray:
        return self._mean(self.sigma_sum[0])

    @property
    def sigma1(self) -> np.ndarray:
        return self._mean(self.sigma_sum[1])

    @property
    def eta0(self) -> np.ndarray:
        return self._mean(self.eta_sum[0])

    @property
    def eta1(self) -> np.ndarray:
        return self._mean(self.eta_sum[1])

    @property
    def sigma(self) -> np.ndarray:
        """Block-diagonal ``diag(Sigma_0, Sigma_1)`` as a dense 2q x 2q matrix."""
        q = self.q
        out = np.zeros((2 * q, 2 * q))
        out[:q, :q] = self.sigma0
        out[q:, q:] = self.sigma1
        return out


@dataclass(frozen=True)
class CoefficientEstimate:
    beta0: np.ndarray
    beta1: np.ndarray
    ridge_used: bool = False
    # Ridge shifts actually applied to each block (0.0 when the direct solve worked).
    ridge: tuple = (0.0, 0.0)

    @property
    def beta(self) -> np.ndarray:
        return np.concatenate([self.beta0, self.beta1])


@dataclass(frozen=True)
class VarianceEstimate:
    tau_hat: float
    sigma2_hat: float
    z: float
    sigma_inv_u: np.ndarray = field(repr=False)

    @property
    def sigma_hat(self) -> float:
        return float(np.sqrt(self.sigma2_hat))


@dataclass(frozen=True)
class StageMoments:
    """What the cross-stage covariance needs from one interim analysis."""

    sigma_inv_u: np.ndarray
    omega: np.ndarray
    sigma_hat: float
    t: int


def _features(cfg: EstimatorConfig, s: np.ndarray) -> np.ndarray:
    if s.ndim != 2 or s.shape[1] != cfg.basis.state_dim:
        raise InputError(
            f"state dimension mismatch: basis expects {cfg.basis.state_dim}, got {s.shape[-1]}"
        )
    return kernels.polynomial_features(s, cfg.basis.degree)


def _batch_features(batch, cfg: EstimatorConfig):
    arrays = transition_arrays(batch)
    if arrays is None or len(arrays[2]) == 0:
        return None
    s, s_next, a, y = arrays
    return _features(cfg, np.asarray(s)), _features(cfg, np.asarray(s_next)), a, y


def update_suff_stats(stats: SuffStats, batch, cfg: EstimatorConfig) -> SuffStats:
    """Fold a batch of transitions into ``Sigma_a`` and ``eta_a``.

    ``omega`` is left alone; it needs the coefficients of the current stage
    (see :func:`update_omega`).
    """
    if stats.q != cfg.q:
        raise InputError(f"stats have q={stats.q}, config has q={cfg.q}")
    fb = _batch_features(batch, cfg)
    if fb is None:
        return stats
    feats, next_feats, a, y = fb
    sigma = stats.sigma_sum.copy()
    eta = stats.eta_sum.copy()
    kernels.accumulate_stats(feats, next_feats, a, y, cfg.gamma, sigma, eta)
    return replace(stats, t=stats.t + len(a), sigma_sum=sigma, eta_sum=eta)


def _solve_block(mat: np.ndarray, rhs: np.ndarray, cfg: EstimatorConfig):
    """Solve ``mat x = rhs``; fall back to a ridge shift when ill-conditioned."""
    q = mat.shape[0]
    with np.errstate(all="ignore"):
        cond = np.linalg.cond(mat)
    if np.isfinite(cond) and 1.0 / cond >= RCOND_THRESHOLD:
        try:
            return np.linalg.solve(mat, rhs), 0.0
        except np.linalg.LinAlgError:
            pass
    lam = cfg.ridge_epsilon * np.linalg.norm(mat, "fro") / q
    if not lam > 0:
        raise NumericalError("singular system and no usable ridge shift (is one arm unobserved?)")
    try:
        return np.linalg.solve(mat + lam * np.eye(q), rhs), lam
    except np.linalg.LinAlgError as exc:
        raise NumericalError("ridge-regularised solve failed") from exc


def estimate_beta(stats: SuffStats, cfg: EstimatorConfig) -> CoefficientEstimate:
    if stats.t == 0:
        raise StateError("no observations accumulated yet")
    b0, lam0 = _solve_block(stats.sigma0, stats.eta0, cfg)
    b1, lam1 = _solve_block(stats.sigma1, stats.eta1, cfg)
    return CoefficientEstimate(b0, b1, ridge_used=bool(lam0 or lam1), ridge=(lam0, lam1))


def estimate_tau(beta: CoefficientEstimate, u: ContrastVector) -> float:
    if u.g.shape != beta.beta0.shape:
        raise InputError(f"contrast has length {u.u.shape[0]}, coefficients {2 * beta.beta0.shape[0]}")
    # u = (-g, g), so u.beta = g.(beta1 - beta0); this form is exactly 0 for equal arms
    return float(u.g @ (beta.beta1 - beta.beta0))


def residual(obs: Observation, beta: CoefficientEstimate, cfg: EstimatorConfig, a: int) -> float:
    """Temporal-difference error of one transition under arm ``a``'s coefficients."""
    b = beta.beta1 if a == 1 else beta.beta0
    psi = basis_eval(cfg.basis, obs.s)
    psi_next = basis_eval(cfg.basis, obs.s_next)
    return float(obs.y + cfg.gamma * psi_next @ b - psi @ b)


def update_omega(stats: SuffStats, batch, beta: CoefficientEstimate | None, cfg: EstimatorConfig) -> SuffStats:
    """Score outer products of the newest stage and the running ``omega``.

    ``batch`` must be exactly the transitions added since the previous call.
    """
    if beta is None:
        raise StateError("update_omega needs the current-stage coefficients; call estimate_beta first")
    fb = _batch_features(batch, cfg)
    n = 0 if fb is None else len(fb[2])
    if stats.t_omega + n != stats.t:
        raise StateError(
            f"batch of {n} transitions does not cover [{stats.t_omega}, {stats.t})"
        )
    q = cfg.q
    omega_star = np.zeros((2 * q, 2 * q))
    if fb is not None:
        feats, next_feats, a, y = fb
        kernels.score_outer(feats, next_feats, a, y, beta.beta0, beta.beta1, cfg.gamma, omega_star)
    if stats.t == 0:
        return stats
    omega = (stats.t_omega * stats.omega + omega_star) / stats.t
    return replace(stats, omega=omega, omega_star=omega_star, t_omega=stats.t)


def _effective_blocks(stats: SuffStats, beta: CoefficientEstimate | None):
    ridge = beta.ridge if beta is not None else (0.0, 0.0)
    q = stats.q
    eye = np.eye(q)
    return stats.sigma0 + ridge[0] * eye, stats.sigma1 + ridge[1] * eye


def sigma_inv_transpose_u(stats: SuffStats, u: ContrastVector, beta: CoefficientEstimate | None = None) -> np.ndarray:
    """``{Sigma^{-1}}^T u`` for the block-diagonal ``Sigma`` (ridge-shifted if ``beta`` was)."""
    s0, s1 = _effective_blocks(stats, beta)
    q = stats.q
    try:
        w0 = np.linalg.solve(s0.T, u.u[:q])
        w1 = np.linalg.solve(s1.T, u.u[q:])
    except np.linalg.LinAlgError as exc:
        raise NumericalError("Sigma is singular") from exc
    return np.concatenate([w0, w1])


def estimate_variance(
    stats: SuffStats,
    u: ContrastVector,
    tau: float,
    t: int,
    beta: CoefficientEstimate | None = None,
) -> VarianceEstimate:
    """Sandwich variance ``u^T Sigma^{-1} Omega Sigma^{-T} u`` and ``z = sqrt(t) tau / sigma``."""
    w = sigma_inv_transpose_u(stats, u, beta)
    omega = 0.5 * (stats.omega + stats.omega.T)
    sigma2 = float(w @ omega @ w)
    scale = float(np.abs(w) @ np.abs(omega) @ np.abs(w))
    if abs(sigma2) <= 1e-14 * scale:
        sigma2 = 0.0
    if not sigma2 > 0 or not np.isfinite(sigma2):
        raise NumericalError(f"variance estimate is not positive ({sigma2!r})")
    z = float(np.sqrt(t) * tau / np.sqrt(sigma2))
    return VarianceEstimate(float(tau), sigma2, z, w)


def estimate_xi(stages: Sequence[StageMoments]) -> np.ndarray:
    """Estimated correlation matrix of the stage statistics ``Z_1..Z_K``."""
    k = len(stages)
    ts = [s.t for s in stages]
    if any(b <= a for a, b in zip(ts, ts[1:])):
        raise InputError("stages must be in increasing time order")
    if any(not s.sigma_hat > 0 for s in stages):
        raise NumericalError("a stage has zero standard error")
    xi = np.empty((k, k))
    for i, si in enumerate(stages):
        for j in range(i, k):
            sj = stages[j]
            val = np.sqrt(si.t / sj.t) * (si.sigma_inv_u @ si.omega @ sj.sigma_inv_u)
            val /= si.sigma_hat * sj.sigma_hat
            xi[i, j] = xi[j, i] = val
    return xi


def fit(data, cfg: EstimatorConfig) -> tuple[SuffStats, CoefficientEstimate]:
    """From-scratch fit over a whole trajectory (no streaming)."""
    stats = update_suff_stats(SuffStats.zeros(cfg.q), data, cfg)
    return stats, estimate_beta(stats, cfg)


# Dynamic (state-dependent) policies -----------------------------------------


def _policy_values(pi, states: np.ndarray) -> np.ndarray:
    if callable(pi):
        vals = np.array([float(pi(s)) for s in states])
    else:
        vals = np.full(states.shape[0], float(pi))
    if np.any((vals < 0) | (vals > 1)):
        raise InputError("policy probabilities must lie in [0, 1]")
    return vals


def estimate_q_dynamic(data, pi: Callable | float, cfg: EstimatorConfig) -> CoefficientEstimate:
    """Q-function coefficients for a stochastic policy ``pi(s) = P(A = 1 | s)``.

    Solves the joint 2q x 2q system in which the successor value mixes both
    arms' Q-functions according to ``pi`` at the next state.
    """
    fb = _batch_features(data, cfg)
    if fb is None:
        raise StateError("no data")
    feats, next_feats, a, y = fb
    arrays = transition_arrays(data)
    pi_next = _policy_values(pi, np.asarray(arrays[1]))
    q = cfg.q
    g = cfg.gamma
    n = len(a)
    w0 = (1.0 - a)[:, None] * feats
    w1 = a[:, None] * feats
    mat = np.zeros((2 * q, 2 * q))
    mat[:q, :q] = w0.T @ (feats - g * (1.0 - pi_next)[:, None] * next_feats)
    mat[:q, q:] = -g * w0.T @ (pi_next[:, None] * next_feats)
    mat[q:, :q] = -g * w1.T @ ((1.0 - pi_next)[:, None] * next_feats)
    mat[q:, q:] = w1.T @ (feats - g * pi_next[:, None] * next_feats)
    mat /= n
    rhs = np.concatenate([w0.T @ y, w1.T @ y]) / n
    theta, lam = _solve_block(mat, rhs, cfg)
    return CoefficientEstimate(theta[:q], theta[q:], ridge_used=bool(lam), ridge=(lam, lam))


def estimate_tau_dynamic(
    q1: CoefficientEstimate,
    q2: CoefficientEstimate,
    pi1: Callable | float,
    pi2: Callable | float,
    g: ReferenceDistribution,
    basis: BasisSpec,
) -> float:
    """Reference-averaged value difference between two stochastic policies."""
    if q1.beta0.shape != q2.beta0.shape or q1.beta0.shape[0] != basis.q:
        raise InputError("coefficient sets do not match the basis")
    psi = basis_eval(basis, g.states)
    p1 = _policy_values(pi1, g.states)
    p2 = _policy_values(pi2, g.states)
    q1_1, q1_0 = psi @ q1.beta1, psi @ q1.beta0
    q2_1, q2_0 = psi @ q2.beta1, psi @ q2.beta0
    integrand = (q1_1 - q1_0) * p1 - (q2_1 - q2_0) * p2 + q1_0 - q2_0
    return float(integrand.mean())
