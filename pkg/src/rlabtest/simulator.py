"""Synthetic single-trajectory experiments.

Three generative models are available:

``example1``
    ``S_t = 0.5 e_t``, ``Y_t = S_t + delta A_t`` (no carryover).
``example2``
    ``S_t = 0.5 S_{t-1} + delta A_{t-1} + 0.5 e_t``, ``Y_t = S_t`` (pure carryover).
``main_sim``
    Two-dimensional state whose transition depends on the previous action;
    ``Y_t = 1 + (S_{1,t} + S_{2,t}) / 2 + e_{3,t}``.

Noise is drawn up front from a dedicated substream, actions from another, so a
replicate's randomness does not depend on ``delta`` or on the design.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from rlabtest import kernels
from rlabtest._rng import substream
from rlabtest.basis import ReferenceDistribution
from rlabtest.data import Trajectory
from rlabtest.errors import InputError

ENV_KINDS = {
    "main_sim": kernels.MODEL_MAIN,
    "example1": kernels.MODEL_EXAMPLE1,
    "example2": kernels.MODEL_EXAMPLE2,
}
STATE_DIM = {"main_sim": 2, "example1": 1, "example2": 1}

_NOISE_STREAM = 0
_ACTION_STREAM = 1
_CROSSOVER_STREAM = 2


@dataclass(frozen=True)
class EnvSpec:
    kind: str
    delta: float = 0.0
    noise_scale: float = 1.0

    def __post_init__(self):
        if self.kind not in ENV_KINDS:
            raise InputError(f"unknown environment {self.kind!r}; choose from {sorted(ENV_KINDS)}")
        if self.noise_scale < 0:
            raise InputError("noise_scale must be nonnegative")

    @property
    def state_dim(self) -> int:
        return STATE_DIM[self.kind]


@dataclass(frozen=True)
class DesignPolicy:
    """Behaviour policy used to assign treatments."""

    kind: str
    p: float = 0.5
    epsilon: float = 0.1
    stage_times: tuple = ()
    actions: tuple = field(default=(), repr=False)

    def __post_init__(self):
        if self.kind not in ("markov", "alternating", "adaptive", "fixed"):
            raise InputError(f"unknown design {self.kind!r}")
        if self.kind in ("markov", "adaptive") and not 0 < self.p < 1:
            raise InputError("p must lie in (0, 1)")
        if self.kind == "adaptive":
            if not 0 < self.epsilon < 1:
                raise InputError("epsilon must lie in (0, 1)")
            times = tuple(int(t) for t in self.stage_times)
            if any(b <= a for a, b in zip(times, times[1:])):
                raise InputError("adaptive stage times must increase")
            object.__setattr__(self, "stage_times", times)
        if self.kind == "fixed":
            object.__setattr__(self, "actions", tuple(int(a) for a in self.actions))

    @classmethod
    def markov(cls, p: float = 0.5) -> "DesignPolicy":
        return cls("markov", p=p)

    @classmethod
    def alternating(cls) -> "DesignPolicy":
        return cls("alternating")

    @classmethod
    def adaptive(cls, epsilon: float = 0.1, stage_times=(), p: float = 0.5) -> "DesignPolicy":
        """Stage-wise epsilon-greedy; ``p`` is the treatment probability before the first stage."""
        return cls("adaptive", p=p, epsilon=epsilon, stage_times=tuple(stage_times))

    @classmethod
    def fixed(cls, actions) -> "DesignPolicy":
        return cls("fixed", actions=tuple(actions))


def _draw_noise(env: EnvSpec, T: int, seed) -> np.ndarray:
    z = substream(seed, _NOISE_STREAM).standard_normal((T + 1, 3))
    if env.kind == "main_sim":
        scale = np.array([0.5, 0.5, 0.3])
    else:
        scale = np.array([0.5, 0.0, 0.0])
    return np.ascontiguousarray(z * scale * env.noise_scale)


def initial_state(env: EnvSpec, noise_row: np.ndarray) -> np.ndarray:
    if env.kind == "main_sim":
        return noise_row[:2] / 2.0
    return noise_row[:1].copy()


def reference_distribution(env: EnvSpec, n: int = 100_000, seed=0) -> ReferenceDistribution:
    """Draws from the initial-state distribution of ``env``."""
    z = substream(seed, _NOISE_STREAM).standard_normal((n, env.state_dim))
    if env.kind == "main_sim":
        states = z * 0.5 * env.noise_scale / 2.0
    else:
        states = z * 0.5 * env.noise_scale
    return ReferenceDistribution(states)


def simulate(
    env: EnvSpec,
    design: DesignPolicy,
    T: int,
    seed=0,
    coupled_estimator: Callable | None = None,
    s0=None,
) -> Trajectory:
    """Generate ``T`` transitions.

    For the adaptive design, ``coupled_estimator(prefix)`` is called at each
    stage time with the trajectory so far and must return coefficients with
    ``beta0``/``beta1``; treatment then follows the epsilon-greedy rule on the
    estimated value difference.
    """
    if T < 0:
        raise InputError("T must be nonnegative")
    model = ENV_KINDS[env.kind]
    d = env.state_dim
    noise = _draw_noise(env, T, seed)
    uniforms = substream(seed, _ACTION_STREAM).random(T + 1)
    states = np.zeros((T + 1, d))
    states[0] = initial_state(env, noise[0]) if s0 is None else np.asarray(s0, dtype=float)
    actions = np.zeros(T, dtype=np.int64)
    rewards = np.zeros(T)
    no_diff = np.zeros(1)

    def run(t0, t1, design_code, diff=no_diff, degree=1):
        kernels.simulate_segment(
            model, states, actions, rewards, noise, uniforms, t0, t1,
            float(env.delta), design_code, float(design.p), float(design.epsilon), diff, degree,
        )

    if design.kind == "markov":
        run(0, T, kernels.DESIGN_MARKOV)
    elif design.kind == "alternating":
        run(0, T, kernels.DESIGN_ALTERNATING)
    elif design.kind == "fixed":
        if len(design.actions) < T:
            raise InputError(f"fixed design has {len(design.actions)} actions, need {T}")
        actions[:] = design.actions[:T]
        run(0, T, kernels.DESIGN_FIXED)
    else:
        if coupled_estimator is None:
            raise InputError("the adaptive design needs a coupled estimator")
        bounds = [t for t in design.stage_times if 0 < t < T]
        start = bounds[0] if bounds else T
        run(0, start, kernels.DESIGN_MARKOV)
        for i, t_k in enumerate(bounds):
            t_next = bounds[i + 1] if i + 1 < len(bounds) else T
            prefix = Trajectory(states[: t_k + 1], actions[:t_k], rewards[:t_k])
            coef = coupled_estimator(prefix)
            diff = np.ascontiguousarray(coef.beta1 - coef.beta0, dtype=np.float64)
            degree = (diff.shape[0] - 1) // d
            if degree * d + 1 != diff.shape[0]:
                raise InputError("coupled estimator coefficients do not match a polynomial basis")
            run(t_k, t_next, kernels.DESIGN_GREEDY, diff, degree)
    return Trajectory(states, actions, rewards)


@dataclass(frozen=True)
class CrossoverSpec:
    n: int
    block_size: int
    env: EnvSpec

    def __post_init__(self):
        if self.n < 1:
            raise InputError("crossover design needs n >= 1 (two blocks)")
        if self.block_size < 1:
            raise InputError("block_size must be >= 1")


@dataclass(frozen=True)
class CrossoverBlocks:
    means: np.ndarray
    treatments: np.ndarray


def crossover_actions(spec: CrossoverSpec, seed) -> np.ndarray:
    first = substream(seed, _CROSSOVER_STREAM).integers(0, 2, size=spec.n)
    blocks = np.empty(2 * spec.n, dtype=np.int64)
    blocks[0::2] = first
    blocks[1::2] = 1 - first
    return blocks


def simulate_crossover(spec: CrossoverSpec, seed=0) -> CrossoverBlocks:
    """Paired blocks with complementary treatments; returns block means."""
    blocks = crossover_actions(spec, seed)
    actions = np.repeat(blocks, spec.block_size)
    traj = simulate(spec.env, DesignPolicy.fixed(actions), len(actions), seed)
    means = traj.rewards.reshape(2 * spec.n, spec.block_size).mean(axis=1)
    return CrossoverBlocks(means, blocks)
