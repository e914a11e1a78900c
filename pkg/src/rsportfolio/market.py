"""I.i.d. one-step return models, scenario sets for expectations, and
reproducible path simulation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PROB_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class DiscreteReturnModel:
    """Finitely many log-return vectors with their probabilities."""

    log_returns: np.ndarray  # (k, d)
    probs: np.ndarray  # (k,)

    def __post_init__(self):
        r = np.atleast_2d(np.asarray(self.log_returns, dtype=float))
        p = np.asarray(self.probs, dtype=float)
        if r.ndim != 2 or r.shape[1] < 1 or p.shape != (len(r),):
            raise ValueError("need one probability per log-return vector")
        if not np.all(np.isfinite(r)):
            raise ValueError("log-returns must be finite")
        if np.any(p < 0) or abs(p.sum() - 1.0) > PROB_TOL:
            raise ValueError("probabilities must be nonnegative and sum to 1")
        object.__setattr__(self, "log_returns", r)
        object.__setattr__(self, "probs", p)

    @classmethod
    def from_gross(cls, gross, probs) -> "DiscreteReturnModel":
        gross = np.asarray(gross, dtype=float)
        if np.any(gross <= 0):
            raise ValueError("gross returns must be strictly positive")
        return cls(np.log(gross), probs)

    @property
    def d(self) -> int:
        return self.log_returns.shape[1]


@dataclass(frozen=True, eq=False)
class GaussianReturnModel:
    """Log-returns ~ N(mean, cov) per period."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        cov = np.asarray(self.cov, dtype=float)
        if mean.ndim != 1 or cov.shape != (len(mean), len(mean)):
            raise ValueError("cov must be a d x d matrix matching mean")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise ValueError("mean and cov must be finite")
        if np.max(np.abs(cov - cov.T), initial=0.0) > 1e-12:
            raise ValueError("cov must be symmetric")
        if np.linalg.eigvalsh(cov).min() < -1e-10:
            raise ValueError("cov must be positive semidefinite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def d(self) -> int:
        return len(self.mean)

    def cholesky(self) -> np.ndarray:
        scale = max(np.abs(np.diag(self.cov)).max(), 1.0)
        for jitter in (0.0, 1e-15, 1e-14, 1e-13, 1e-12):
            try:
                return np.linalg.cholesky(self.cov + jitter * scale * np.eye(self.d))
            except np.linalg.LinAlgError:
                continue
        raise np.linalg.LinAlgError("covariance is not factorizable")


ReturnModel = DiscreteReturnModel | GaussianReturnModel


@dataclass(frozen=True, eq=False)
class ScenarioSet:
    """Weighted gross-return vectors ``w = exp(r)`` approximating the
    one-step law."""

    gross: np.ndarray  # (n, d)
    weights: np.ndarray  # (n,)

    def __post_init__(self):
        g = np.asarray(self.gross, dtype=float)
        wt = np.asarray(self.weights, dtype=float)
        if g.ndim != 2 or wt.shape != (len(g),):
            raise ValueError("need one weight per scenario")
        if not np.all(np.isfinite(g)) or np.any(g <= 0):
            raise ValueError("gross returns must be finite and strictly positive")
        if np.any(wt < 0) or abs(wt.sum() - 1.0) > 1e-10:
            raise ValueError("scenario weights must be nonnegative and sum to 1")
        g.setflags(write=False)
        wt.setflags(write=False)
        object.__setattr__(self, "gross", g)
        object.__setattr__(self, "weights", wt)

    @property
    def d(self) -> int:
        return self.gross.shape[1]

    def __len__(self) -> int:
        return len(self.gross)

    @property
    def log_returns(self) -> np.ndarray:
        return np.log(self.gross)


def scenarios_from_discrete(model: DiscreteReturnModel) -> ScenarioSet:
    return ScenarioSet(np.exp(model.log_returns), model.probs.copy())


def scenarios_from_gaussian(
    model: GaussianReturnModel, n: int = 4096, seed: int = 7, antithetic: bool = False
) -> ScenarioSet:
    """Equally weighted Monte Carlo scenarios ``exp(mean + L z)``.

    Deterministic in ``(model, n, seed, antithetic)``; with ``antithetic``
    the second half mirrors the first (n must then be even).
    """
    if n < 2:
        raise ValueError("need at least 2 scenarios")
    rng = np.random.Generator(np.random.Philox(seed))
    if antithetic:
        if n % 2:
            raise ValueError("antithetic sampling needs an even scenario count")
        half = rng.standard_normal((n // 2, model.d))
        z = np.concatenate([half, -half])
    else:
        z = rng.standard_normal((n, model.d))
    r = model.mean + z @ model.cholesky().T
    return ScenarioSet(np.exp(r), np.full(n, 1.0 / n))


def path_rng(seed: int, index: int) -> np.random.Generator:
    """Counter-based generator for path ``index``; independent of how many
    other paths are drawn or in which order."""
    return np.random.Generator(np.random.Philox(key=[seed & 0xFFFFFFFFFFFFFFFF, index]))


def sample_path(model: ReturnModel, horizon: int, seed: int, index: int) -> np.ndarray:
    """Gross returns ``(horizon, d)`` of path ``index``."""
    if horizon < 1:
        raise ValueError("horizon must be positive")
    rng = path_rng(seed, index)
    if isinstance(model, DiscreteReturnModel):
        cum = np.cumsum(model.probs)
        u = rng.random(horizon)
        k = np.minimum(np.searchsorted(cum, u, side="right"), len(cum) - 1)
        return np.exp(model.log_returns[k])
    if isinstance(model, GaussianReturnModel):
        z = rng.standard_normal((horizon, model.d))
        return np.exp(model.mean + z @ model.cholesky().T)
    raise TypeError(f"unsupported return model {type(model).__name__}")


def sample_paths(
    model: ReturnModel, horizon: int, n_paths: int, seed: int, start: int = 0
) -> np.ndarray:
    """Gross-return paths ``(n_paths, horizon, d)`` for indices
    ``start .. start + n_paths - 1``."""
    if horizon < 1 or n_paths < 1:
        raise ValueError("horizon and n_paths must be positive")
    out = np.empty((n_paths, horizon, model.d))
    for i in range(n_paths):
        out[i] = sample_path(model, horizon, seed, start + i)
    return out
