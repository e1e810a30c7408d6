"""Monte-Carlo calibration of the O'Brien-Fleming constant c(K, alpha).

With equal stage sizes the stage-k statistic is W_k / sqrt(k) for a Gaussian
random walk W, and the boundary c sqrt(K / k) is crossed iff W_k / sqrt(K) > c.
So c is the upper-alpha quantile of max_k W_k / sqrt(K).
"""

import numpy as np

ALPHAS = (0.01, 0.025, 0.05, 0.1)
N_PATHS = 1_000_000


def calibrate(K, alphas, n_paths=N_PATHS, seed=20240611):
    rng = np.random.default_rng([seed, K])
    maxima = np.empty(n_paths)
    step = 200_000
    for i in range(0, n_paths, step):
        walk = np.cumsum(rng.standard_normal((min(step, n_paths - i), K)), axis=1)
        maxima[i : i + step] = walk.max(axis=1) / np.sqrt(K)
    return {a: float(np.quantile(maxima, 1 - a)) for a in alphas}


if __name__ == "__main__":
    print("OBF_CONSTANTS = {")
    for a in ALPHAS:
        row = [calibrate(K, [a])[a] for K in range(1, 11)]
        print(f"    {a}: ({', '.join(f'{c:.4f}' for c in row)}),")
    print("}")
