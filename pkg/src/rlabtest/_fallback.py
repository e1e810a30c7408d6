"""Pure Python / numpy implementations of the hot kernels.

Signatures mirror ``_ckernels.pyx`` exactly; ``rlabtest.kernels`` picks one.
"""

import numpy as np

MODEL_MAIN = 0
MODEL_EXAMPLE1 = 1
MODEL_EXAMPLE2 = 2

DESIGN_MARKOV = 0
DESIGN_ALTERNATING = 1
DESIGN_GREEDY = 2
DESIGN_FIXED = 3


def polynomial_features(states, degree):
    states = np.ascontiguousarray(states, dtype=np.float64)
    n, d = states.shape
    out = np.empty((n, d * degree + 1))
    out[:, 0] = 1.0
    for i in range(d):
        col = states[:, i]
        p = np.ones(n)
        for j in range(degree):
            p = p * col
            out[:, 1 + i * degree + j] = p
    return out


def accumulate_stats(feats, next_feats, actions, rewards, gamma, sigma, eta):
    """Add ``sum_j psi_j 1{a_j=a} (psi_j - gamma psi'_j)^T`` and ``sum_j psi_j 1{a_j=a} y_j``
    into ``sigma`` (2, q, q) and ``eta`` (2, q) in place."""
    actions = np.asarray(actions)
    diff = feats - gamma * next_feats
    for a in (0, 1):
        m = actions == a
        fa = feats[m]
        sigma[a] += fa.T @ diff[m]
        eta[a] += fa.T @ rewards[m]


def score_outer(feats, next_feats, actions, rewards, beta0, beta1, gamma, omega):
    """Add the outer products of the TD score vectors into ``omega`` (2q, 2q).

    Returns the (n, 2q) score matrix.
    """
    q = feats.shape[1]
    actions = np.asarray(actions, dtype=np.float64)
    cur0 = feats @ beta0
    cur1 = feats @ beta1
    nxt0 = next_feats @ beta0
    nxt1 = next_feats @ beta1
    res0 = rewards + gamma * nxt0 - cur0
    res1 = rewards + gamma * nxt1 - cur1
    scores = np.empty((feats.shape[0], 2 * q))
    scores[:, :q] = feats * ((1.0 - actions) * res0)[:, None]
    scores[:, q:] = feats * (actions * res1)[:, None]
    omega += scores.T @ scores
    return scores


def _greedy_score(s, diff, degree):
    total = diff[0]
    for i in range(len(s)):
        p = 1.0
        for j in range(degree):
            p = p * s[i]
            total += p * diff[1 + i * degree + j]
    return total


def simulate_segment(model, states, actions, rewards, noise, uniforms, t0, t1,
                     delta, design, prob, greedy_eps, diff, degree):
    """Advance the trajectory from ``t0`` to ``t1``.

    On entry ``states[t0]`` is set. For each ``t`` in ``[t0, t1)`` this picks
    ``actions[t]``, writes ``rewards[t]`` and ``states[t + 1]``.
    ``noise`` is (T + 1, 3) and already scaled.
    """
    for t in range(t0, t1):
        s = states[t]
        if design == DESIGN_MARKOV:
            a = 1 if uniforms[t] < prob else 0
        elif design == DESIGN_ALTERNATING:
            a = t % 2
        elif design == DESIGN_GREEDY:
            b = greedy_eps / 2.0
            if _greedy_score(s, diff, degree) > 0.0:
                b += 1.0 - greedy_eps
            a = 1 if uniforms[t] < b else 0
        else:
            a = int(actions[t])
        actions[t] = a
        if model == MODEL_MAIN:
            s1 = float(s[0])
            s2 = float(s[1])
            rewards[t] = 1.0 + (s1 + s2) / 2.0 + noise[t, 2]
            sign = 2.0 * a - 1.0
            states[t + 1, 0] = sign * s1 / 2.0 + s2 / 4.0 + delta * a + noise[t + 1, 0]
            states[t + 1, 1] = sign * s2 / 2.0 + s1 / 4.0 + delta * a + noise[t + 1, 1]
        elif model == MODEL_EXAMPLE1:
            rewards[t] = float(s[0]) + delta * a
            states[t + 1, 0] = noise[t + 1, 0]
        else:
            s1 = float(s[0])
            rewards[t] = s1
            states[t + 1, 0] = 0.5 * s1 + delta * a + noise[t + 1, 0]
