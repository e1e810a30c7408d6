# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the kernels in ``_fallback.py`` (same signatures)."""

import numpy as np
cimport numpy as cnp

cnp.import_array()

cdef enum:
    MODEL_MAIN = 0
    MODEL_EXAMPLE1 = 1
    DESIGN_MARKOV = 0
    DESIGN_ALTERNATING = 1
    DESIGN_GREEDY = 2


def polynomial_features(states, int degree):
    cdef double[:, ::1] s = np.ascontiguousarray(states, dtype=np.float64)
    cdef Py_ssize_t n = s.shape[0], d = s.shape[1], t, i, j
    out = np.empty((n, d * degree + 1))
    cdef double[:, ::1] o = out
    cdef double p
    for t in range(n):
        o[t, 0] = 1.0
        for i in range(d):
            p = 1.0
            for j in range(degree):
                p = p * s[t, i]
                o[t, 1 + i * degree + j] = p
    return out


def accumulate_stats(feats, next_feats, actions, rewards, double gamma, sigma, eta):
    cdef double[:, ::1] f = np.ascontiguousarray(feats, dtype=np.float64)
    cdef double[:, ::1] g = np.ascontiguousarray(next_feats, dtype=np.float64)
    cdef long[::1] a = np.ascontiguousarray(actions, dtype=np.int64)
    cdef double[::1] y = np.ascontiguousarray(rewards, dtype=np.float64)
    cdef double[:, :, :] sg = sigma
    cdef double[:, :] et = eta
    cdef Py_ssize_t n = f.shape[0], q = f.shape[1], t, i, j
    cdef long k
    cdef double fi
    for t in range(n):
        k = a[t]
        for i in range(q):
            fi = f[t, i]
            et[k, i] += fi * y[t]
            for j in range(q):
                sg[k, i, j] += fi * (f[t, j] - gamma * g[t, j])


def score_outer(feats, next_feats, actions, rewards, beta0, beta1, double gamma, omega):
    cdef double[:, ::1] f = np.ascontiguousarray(feats, dtype=np.float64)
    cdef double[:, ::1] g = np.ascontiguousarray(next_feats, dtype=np.float64)
    cdef long[::1] a = np.ascontiguousarray(actions, dtype=np.int64)
    cdef double[::1] y = np.ascontiguousarray(rewards, dtype=np.float64)
    cdef double[::1] b0 = np.ascontiguousarray(beta0, dtype=np.float64)
    cdef double[::1] b1 = np.ascontiguousarray(beta1, dtype=np.float64)
    cdef double[:, :] om = omega
    cdef Py_ssize_t n = f.shape[0], q = f.shape[1], t, i, j
    cdef double cur, nxt, res
    cdef double[::1] b
    scores = np.zeros((n, 2 * q))
    cdef double[:, ::1] sc = scores
    cdef Py_ssize_t off
    for t in range(n):
        if a[t] == 1:
            b = b1
            off = q
        else:
            b = b0
            off = 0
        cur = 0.0
        nxt = 0.0
        for i in range(q):
            cur += f[t, i] * b[i]
            nxt += g[t, i] * b[i]
        res = y[t] + gamma * nxt - cur
        for i in range(q):
            sc[t, off + i] = f[t, i] * res
        for i in range(q):
            for j in range(q):
                om[off + i, off + j] += sc[t, off + i] * sc[t, off + j]
    return scores


cdef inline double _greedy_score(double[:, ::1] states, Py_ssize_t t,
                                 double[::1] diff, int degree):
    cdef double total = diff[0], p
    cdef Py_ssize_t i, j
    for i in range(states.shape[1]):
        p = 1.0
        for j in range(degree):
            p = p * states[t, i]
            total += p * diff[1 + i * degree + j]
    return total


def simulate_segment(int model, states, actions, rewards, noise, uniforms,
                     Py_ssize_t t0, Py_ssize_t t1, double delta, int design,
                     double prob, double greedy_eps, diff, int degree):
    cdef double[:, ::1] S = states
    cdef long[::1] A = actions
    cdef double[::1] Y = rewards
    cdef double[:, ::1] E = noise
    cdef double[::1] U = uniforms
    cdef double[::1] dv = np.ascontiguousarray(diff, dtype=np.float64)
    cdef Py_ssize_t t
    cdef long act
    cdef double b, s1, s2, sign
    for t in range(t0, t1):
        if design == DESIGN_MARKOV:
            act = 1 if U[t] < prob else 0
        elif design == DESIGN_ALTERNATING:
            act = t % 2
        elif design == DESIGN_GREEDY:
            b = greedy_eps / 2.0
            if _greedy_score(S, t, dv, degree) > 0.0:
                b += 1.0 - greedy_eps
            act = 1 if U[t] < b else 0
        else:
            act = A[t]
        A[t] = act
        if model == MODEL_MAIN:
            s1 = S[t, 0]
            s2 = S[t, 1]
            Y[t] = 1.0 + (s1 + s2) / 2.0 + E[t, 2]
            sign = 2.0 * act - 1.0
            S[t + 1, 0] = sign * s1 / 2.0 + s2 / 4.0 + delta * act + E[t + 1, 0]
            S[t + 1, 1] = sign * s2 / 2.0 + s1 / 4.0 + delta * act + E[t + 1, 1]
        elif model == MODEL_EXAMPLE1:
            Y[t] = S[t, 0] + delta * act
            S[t + 1, 0] = E[t + 1, 0]
        else:
            s1 = S[t, 0]
            Y[t] = s1
            S[t + 1, 0] = 0.5 * s1 + delta * act + E[t + 1, 0]
