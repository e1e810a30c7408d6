"""Time the compiled kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py [--repeat 5]

Prints one line per kernel with the best-of-N time for each backend and the
speedup. Both backends run on identical inputs and the outputs are compared.
"""

import argparse
import timeit

import numpy as np

from rlabtest import _fallback

try:
    from rlabtest import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def _inputs(T=600, d=2, degree=4, seed=0):
    rng = np.random.default_rng(seed)
    q = d * degree + 1
    noise = np.ascontiguousarray(rng.standard_normal((T + 1, 3)) * [0.5, 0.5, 0.3])
    uniforms = rng.random(T + 1)
    states = rng.standard_normal((T + 1, d)) * 0.5
    actions = rng.integers(0, 2, T).astype(np.int64)
    rewards = rng.standard_normal(T)
    diff = rng.standard_normal(q)
    return dict(T=T, d=d, degree=degree, q=q, noise=noise, uniforms=uniforms,
                states=states, actions=actions, rewards=rewards, diff=diff)


def _cases(mod, x):
    feats = mod.polynomial_features(x["states"], x["degree"])
    cur, nxt = np.ascontiguousarray(feats[:-1]), np.ascontiguousarray(feats[1:])
    q = x["q"]
    beta0, beta1 = x["diff"], -x["diff"]

    def features():
        return mod.polynomial_features(x["states"], x["degree"])

    def stats():
        sigma, eta = np.zeros((2, q, q)), np.zeros((2, q))
        mod.accumulate_stats(cur, nxt, x["actions"], x["rewards"], 0.6, sigma, eta)
        return sigma, eta

    def scores():
        omega = np.zeros((2 * q, 2 * q))
        mod.score_outer(cur, nxt, x["actions"], x["rewards"], beta0, beta1, 0.6, omega)
        return omega

    def simulate(design):
        def run():
            states = np.zeros((x["T"] + 1, x["d"]))
            actions = np.zeros(x["T"], dtype=np.int64)
            rewards = np.zeros(x["T"])
            mod.simulate_segment(_fallback.MODEL_MAIN, states, actions, rewards, x["noise"], x["uniforms"],
                                 0, x["T"], 0.1, design, 0.5, 0.1, x["diff"], x["degree"])
            return states, actions, rewards
        return run

    return {
        "polynomial_features": features,
        "accumulate_stats": stats,
        "score_outer": scores,
        "simulate_segment[markov]": simulate(_fallback.DESIGN_MARKOV),
        "simulate_segment[greedy]": simulate(_fallback.DESIGN_GREEDY),
    }


def _same(a, b):
    if isinstance(a, tuple):
        return all(_same(u, v) for u, v in zip(a, b))
    return np.allclose(a, b, rtol=1e-12, atol=1e-12)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--T", type=int, default=600)
    args = parser.parse_args(argv)
    x = _inputs(T=args.T)
    py = _cases(_fallback, x)
    cy = _cases(_ckernels, x) if _ckernels is not None else {}
    print(f"{'kernel':28s} {'python [ms]':>12s} {'cython [ms]':>12s} {'speedup':>8s}  match")
    for name, fn in py.items():
        number = 20
        t_py = min(timeit.repeat(fn, number=number, repeat=args.repeat)) / number * 1e3
        if name in cy:
            t_cy = min(timeit.repeat(cy[name], number=number, repeat=args.repeat)) / number * 1e3
            match = _same(fn(), cy[name]())
            print(f"{name:28s} {t_py:12.4f} {t_cy:12.4f} {t_py / t_cy:8.1f}  {match}")
        else:
            print(f"{name:28s} {t_py:12.4f} {'n/a':>12s} {'':>8s}  -")


if __name__ == "__main__":
    main()
