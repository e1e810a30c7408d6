"""Observation records and the array-backed trajectory container."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


@dataclass(frozen=True)
class Observation:
    t: int
    s: np.ndarray
    a: int
    y: float
    s_next: np.ndarray

    def __post_init__(self):
        s = np.atleast_1d(np.asarray(self.s, dtype=float))
        s_next = np.atleast_1d(np.asarray(self.s_next, dtype=float))
        if s.shape != s_next.shape:
            raise ValueError(f"state and next state differ in shape: {s.shape} vs {s_next.shape}")
        if self.a not in (0, 1):
            raise ValueError(f"action must be 0 or 1, got {self.a!r}")
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "s_next", s_next)


@dataclass
class Trajectory:
    """``n`` consecutive transitions starting at time ``t0``.

    ``states`` has ``n + 1`` rows: ``states[i]`` is the state at ``t0 + i`` and
    ``states[i + 1]`` its successor.
    """

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    t0: int = 0

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=np.float64)
        if self.states.ndim == 1:
            self.states = self.states[:, None]
        self.actions = np.asarray(self.actions, dtype=np.int64)
        self.rewards = np.asarray(self.rewards, dtype=np.float64)
        n = self.actions.shape[0]
        if self.rewards.shape != (n,) or self.states.shape[0] != n + 1:
            raise ValueError(
                f"inconsistent trajectory shapes: states {self.states.shape}, "
                f"actions {self.actions.shape}, rewards {self.rewards.shape}"
            )
        if n and not np.isin(self.actions, (0, 1)).all():
            raise ValueError("actions must be 0 or 1")

    def __len__(self) -> int:
        return self.actions.shape[0]

    @property
    def state_dim(self) -> int:
        return self.states.shape[1]

    def window(self, start: int, stop: int) -> "Trajectory":
        """Transitions ``start <= t < stop`` (positions relative to this trajectory)."""
        if not 0 <= start <= stop <= len(self):
            raise IndexError(f"window [{start}, {stop}) outside trajectory of length {len(self)}")
        return Trajectory(
            self.states[start : stop + 1],
            self.actions[start:stop],
            self.rewards[start:stop],
            t0=self.t0 + start,
        )

    def observations(self) -> list[Observation]:
        return [
            Observation(self.t0 + i, self.states[i], int(self.actions[i]), float(self.rewards[i]), self.states[i + 1])
            for i in range(len(self))
        ]

    @classmethod
    def from_observations(cls, obs: Sequence[Observation]) -> "Trajectory":
        obs = list(obs)
        if not obs:
            raise ValueError("cannot build a trajectory from zero observations; use Trajectory.empty")
        for prev, cur in zip(obs, obs[1:]):
            if cur.t != prev.t + 1:
                raise ValueError(f"observations out of order at t={cur.t}")
        states = np.vstack([o.s for o in obs] + [obs[-1].s_next])
        chained = all(np.array_equal(a.s_next, b.s) for a, b in zip(obs, obs[1:]))
        if not chained:
            raise ValueError("observation next-states do not match the following states")
        return cls(states, [o.a for o in obs], [o.y for o in obs], t0=obs[0].t)

    @classmethod
    def empty(cls, state_dim: int, t0: int = 0) -> "Trajectory":
        return cls(np.zeros((1, state_dim)), np.zeros(0, dtype=np.int64), np.zeros(0), t0=t0)


def transition_arrays(batch):
    """``(s, s_next, a, y)`` arrays for a Trajectory or a sequence of Observations.

    Observation batches need not chain, so current and next states are kept apart.
    """
    if isinstance(batch, Trajectory):
        return batch.states[:-1], batch.states[1:], batch.actions, batch.rewards
    obs = list(batch)
    if not obs:
        return None
    s = np.vstack([o.s for o in obs])
    s_next = np.vstack([o.s_next for o in obs])
    a = np.array([o.a for o in obs], dtype=np.int64)
    y = np.array([o.y for o in obs], dtype=np.float64)
    return s, s_next, a, y


def concatenate(parts: Iterable[Trajectory]) -> Trajectory:
    parts = [p for p in parts if len(p)]
    if not parts:
        raise ValueError("nothing to concatenate")
    states = np.vstack([parts[0].states[:1]] + [p.states[1:] for p in parts])
    return Trajectory(
        states,
        np.concatenate([p.actions for p in parts]),
        np.concatenate([p.rewards for p in parts]),
        t0=parts[0].t0,
    )
