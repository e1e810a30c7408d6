"""Sieve features for the linear Q-function model and the reference contrast."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from rlabtest.errors import InputError
from rlabtest.kernels import polynomial_features


@dataclass(frozen=True)
class BasisSpec:
    """Polynomial sieve ``(1, s_1, ..., s_1^J, ..., s_d, ..., s_d^J)``.

    ``degree=0`` is the constant basis (q = 1).
    """

    degree: int
    state_dim: int
    kind: str = "polynomial"

    def __post_init__(self):
        if self.kind != "polynomial":
            raise InputError(f"unsupported basis kind {self.kind!r}")
        if self.degree < 0:
            raise InputError("degree must be >= 0")
        if self.state_dim < 1:
            raise InputError("state_dim must be >= 1")

    @property
    def q(self) -> int:
        return self.state_dim * self.degree + 1


@dataclass(frozen=True)
class ReferenceDistribution:
    """Empirical reference measure over initial states.

    Either a sample set of shape ``(n, d)`` or a single point mass.
    """

    states: np.ndarray
    point_mass: bool = False

    def __post_init__(self):
        states = np.asarray(self.states, dtype=float)
        states = np.empty((0, 0)) if states.size == 0 else np.atleast_2d(states)
        if self.point_mass and states.shape[0] != 1:
            raise InputError("point mass takes exactly one state")
        object.__setattr__(self, "states", states)

    @classmethod
    def at(cls, state) -> "ReferenceDistribution":
        return cls(np.asarray(state, dtype=float).reshape(1, -1), point_mass=True)

    @property
    def sample_count(self) -> int:
        return self.states.shape[0]

    @property
    def dim(self) -> int:
        return self.states.shape[1]


@dataclass(frozen=True)
class ContrastVector:
    """``u = (-g, g)`` with ``g`` the reference average of the features."""

    g: np.ndarray
    u: np.ndarray = field(init=False)

    def __post_init__(self):
        g = np.asarray(self.g, dtype=float)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "u", np.concatenate([-g, g]))

    @property
    def q(self) -> int:
        return self.g.shape[0]


def basis_eval(spec: BasisSpec, s) -> np.ndarray:
    """Features of one state (1-d input) or a stack of states (2-d input)."""
    s = np.asarray(s, dtype=float)
    single = s.ndim == 1
    states = s.reshape(1, -1) if single else s
    if states.ndim != 2 or states.shape[1] != spec.state_dim:
        raise InputError(
            f"state dimension mismatch: expected {spec.state_dim}, got shape {s.shape}"
        )
    out = polynomial_features(states, spec.degree)
    return out[0] if single else out


def compute_contrast(spec: BasisSpec, g: ReferenceDistribution) -> ContrastVector:
    if g.sample_count == 0:
        raise InputError("reference distribution has no states")
    if g.dim != spec.state_dim:
        raise InputError(
            f"reference states have dimension {g.dim}, basis expects {spec.state_dim}"
        )
    feats = basis_eval(spec, g.states)
    return ContrastVector(feats.mean(axis=0))
