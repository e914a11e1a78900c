"""Long-only mean-variance allocation by active-set enumeration."""

from __future__ import annotations

import itertools

import numpy as np

KKT_TOL = 1e-10


def mean_variance_objective(pi, mean, cov, gamma: float) -> float:
    pi = np.asarray(pi, dtype=float)
    return float(pi @ mean + 0.5 * gamma * pi @ cov @ pi)


def solve_mean_variance(mean, cov, gamma: float) -> np.ndarray:
    """Maximize ``pi.mean + gamma/2 * pi' cov pi`` over the unit simplex.

    For every support set the equality-constrained stationarity system is
    solved; among candidates with nonnegative weights and nonpositive reduced
    gradients off the support, the best objective wins. Exact for the small
    asset counts used here (2^d - 1 supports).
    """
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    d = len(mean)
    if cov.shape != (d, d):
        raise ValueError("cov must be d x d")
    if not gamma < 0:
        raise ValueError("mean-variance allocation needs gamma < 0")

    best, best_obj = None, -np.inf
    fallback, fallback_obj = None, -np.inf
    for size in range(1, d + 1):
        for support in itertools.combinations(range(d), size):
            s = list(support)
            kkt = np.zeros((size + 1, size + 1))
            kkt[:size, :size] = gamma * cov[np.ix_(s, s)]
            kkt[:size, size] = -1.0
            kkt[size, :size] = 1.0
            rhs = np.concatenate([-mean[s], [1.0]])
            try:
                sol = np.linalg.solve(kkt, rhs)
            except np.linalg.LinAlgError:
                continue
            if not np.all(np.isfinite(sol)) or np.any(sol[:size] < -KKT_TOL):
                continue
            pi = np.zeros(d)
            pi[s] = np.maximum(sol[:size], 0.0)
            pi /= pi.sum()
            obj = mean_variance_objective(pi, mean, cov, gamma)
            if obj > fallback_obj:
                fallback, fallback_obj = pi, obj
            grad = mean + gamma * cov @ pi
            off = [j for j in range(d) if j not in support]
            scale = 1.0 + np.abs(grad).max()
            if off and np.any(grad[off] - sol[size] > KKT_TOL * scale):
                continue
            if obj > best_obj:
                best, best_obj = pi, obj
    if best is None:
        best = fallback
    if best is None:  # pragma: no cover - vertices always yield candidates
        raise RuntimeError("no feasible support found")
    return best
