"""Entropic utility (certainty equivalent) of finite weighted samples.

``mu_gamma(X) = (1/gamma) * log E[exp(gamma * X)]``, with ``gamma = 0`` read
as the plain expectation. Risk-averse for gamma < 0, risk-seeking for
gamma > 0.
"""

from __future__ import annotations

import numpy as np
from scipy.special import logsumexp

PROB_TOL = 1e-12


def _check_sample(values, probs):
    values = np.asarray(values, dtype=float)
    if probs is None:
        n = values.shape[-1]
        probs = np.full(n, 1.0 / n)
    probs = np.asarray(probs, dtype=float)
    if values.shape[-1] != probs.shape[-1]:
        raise ValueError("values and probabilities differ in length")
    if not np.all(np.isfinite(values)):
        raise ValueError("sample values must be finite")
    if np.any(probs < 0) or np.any(np.abs(probs.sum(axis=-1) - 1.0) > PROB_TOL):
        raise ValueError("probabilities must be nonnegative and sum to 1")
    return values, probs


def ce_kernel(values: np.ndarray, probs: np.ndarray, gamma) -> np.ndarray:
    """Unvalidated certainty equivalent along the last axis.

    ``gamma`` is a scalar or an array broadcasting against ``values[..., 0]``;
    zero entries give the mean.
    """
    g = np.asarray(gamma, dtype=float)[..., None]
    mean = values @ probs
    safe = np.where(g == 0, 1.0, g)
    y = safe * (values - mean[..., None])
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        logp = np.log(probs)
        # small |gamma x|: log1p/expm1 around the mean avoids cancellation
        small = np.log1p(np.expm1(y) @ probs)
        large = logsumexp(y + logp, axis=-1)
    tilt = np.where(np.abs(y).max(axis=-1) < 1.0, small, large) / safe[..., 0]
    out = mean + np.where(g[..., 0] == 0, 0.0, tilt)
    # keep the result inside [min, max] despite rounding
    return np.clip(out, values.min(axis=-1), values.max(axis=-1))


def entropic_utility(values, probs=None, gamma: float = 0.0, *, axis: int = -1):
    """Certainty equivalent of the discrete law ``sum_i probs_i * delta(values_i)``.

    ``values`` may carry leading batch axes; the sample runs along ``axis``.
    ``probs=None`` means equal weights. Evaluated with a max-shift so that
    ``|gamma * x|`` in the hundreds does not overflow.
    """
    values = np.moveaxis(np.asarray(values, dtype=float), axis, -1)
    values, probs = _check_sample(values, probs)
    out = ce_kernel(values, probs, gamma)
    return float(out) if np.ndim(out) == 0 else out


def _check_variance(variance):
    if np.any(np.asarray(variance) < 0):
        raise ValueError("variance must be nonnegative")


def gaussian_entropic(mean: float, variance: float, gamma: float) -> float:
    """Exact entropic utility of N(mean, variance)."""
    _check_variance(variance)
    return mean + 0.5 * gamma * variance


def taylor_proxy(mean: float, variance: float, gamma: float) -> float:
    """Second-order expansion ``mean + gamma/2 * variance`` used as a reported
    metric. Same formula as :func:`gaussian_entropic`, kept separate since it
    is an approximation for non-Gaussian laws."""
    _check_variance(variance)
    return mean + 0.5 * gamma * variance
