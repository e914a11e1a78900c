"""Monte Carlo strategy metrics, trading intensity and no-trade regions."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .costs import CostSchedule
from .entropic import entropic_utility, taylor_proxy
from .geometry import Policy, SimplexGrid, barycentric
from .market import ReturnModel, sample_paths
from .strategies import (
    SNAP_ETA,
    BatchResult,
    BellmanStrategy,
    FixedMix,
    Strategy,
    WealthPath,
    simulate_batch,
)

CHUNK = 2500
N_BOOT = 200


@dataclass
class Metrics:
    """Per-period metrics of terminal log-wealth (everything divided by T)."""

    mean: float
    std: float
    entropy: float
    taylor: float
    n_paths: int
    horizon: int
    stderr_mean: float
    stderr_entropy: float
    fraction_traded: float = 0.0

    def row(self) -> dict:
        return {
            "mean": self.mean,
            "std": self.std,
            "taylor": self.taylor,
            "entropy": self.entropy,
            "stderr_mean": self.stderr_mean,
            "stderr_entropy": self.stderr_entropy,
            "fraction_traded": self.fraction_traded,
            "n_paths": self.n_paths,
            "horizon": self.horizon,
        }


@dataclass
class TradeStats:
    days_traded: int
    fraction_traded: float
    cumulative_decay: float


@dataclass
class NoTradeRegion:
    members: np.ndarray  # grid ordinals
    points: np.ndarray  # (k, d)
    lower: np.ndarray | None  # coordinate-wise min over members
    upper: np.ndarray | None

    def __len__(self) -> int:
        return len(self.members)

    def interval(self) -> tuple[float, float]:
        """First-weight range, the natural summary for two assets."""
        if self.lower is None:
            raise ValueError("empty no-trade region")
        return float(self.lower[0]), float(self.upper[0])


def simulate_many(
    strategy: Strategy,
    model: ReturnModel,
    horizon: int,
    n_paths: int,
    seed: int,
    schedule: CostSchedule,
    threads: int = 1,
) -> BatchResult:
    """Simulate paths ``0..n_paths-1`` of ``seed`` in chunks; the result does
    not depend on ``threads``."""

    def run(start: int) -> BatchResult:
        count = min(CHUNK, n_paths - start)
        paths = sample_paths(model, horizon, count, seed, start=start)
        return simulate_batch(strategy, paths, schedule)

    starts = range(0, n_paths, CHUNK)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, starts))
    else:
        parts = [run(s) for s in starts]
    return BatchResult(
        np.concatenate([p.final_log_wealth for p in parts]),
        np.concatenate([p.days_traded for p in parts]),
        np.concatenate([p.log_decay for p in parts]),
    )


def bootstrap_entropy_stderr(x: np.ndarray, gamma: float, n_boot: int = N_BOOT, seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    stats = np.empty(n_boot)
    for b in range(n_boot):
        stats[b] = entropic_utility(x[rng.integers(0, len(x), len(x))], None, gamma)
    return float(stats.std(ddof=1))


def metrics_from_log_wealth(
    log_wealth: np.ndarray, horizon: int, gamma: float, days_traded=None
) -> Metrics:
    x = np.asarray(log_wealth, dtype=float)
    n = len(x)
    mean = float(x.mean())
    var = float(x.var(ddof=1))
    ent = entropic_utility(x, None, gamma)
    frac = 0.0 if days_traded is None else float(np.mean(days_traded) / horizon)
    return Metrics(
        mean=mean / horizon,
        std=math.sqrt(var) / horizon,
        entropy=ent / horizon,
        taylor=taylor_proxy(mean, var, gamma) / horizon,
        n_paths=n,
        horizon=horizon,
        stderr_mean=math.sqrt(var / n) / horizon,
        stderr_entropy=bootstrap_entropy_stderr(x, gamma) / horizon,
        fraction_traded=frac,
    )


def evaluate_mc(
    strategy: Strategy,
    model: ReturnModel,
    horizon: int,
    n_paths: int,
    seed: int,
    gamma: float,
    schedule: CostSchedule,
    threads: int = 1,
) -> Metrics:
    """Time-normalized mean, std, entropy and Taylor proxy of ``log W(T)``."""
    if horizon < 1 or n_paths < 2:
        raise ValueError("need horizon >= 1 and at least 2 paths")
    res = simulate_many(strategy, model, horizon, n_paths, seed, schedule, threads)
    return metrics_from_log_wealth(res.final_log_wealth, horizon, gamma, res.days_traded)


def trading_stats(path: WealthPath) -> TradeStats:
    days = int(path.traded.sum())
    return TradeStats(
        days_traded=days,
        fraction_traded=days / path.horizon if path.horizon else 0.0,
        cumulative_decay=float(np.exp(np.log(path.decays).sum())),
    )


def no_trade_region(policy: Policy, grid: SimplexGrid | None = None, eta: float | None = None) -> NoTradeRegion:
    """Grid points where the strategy built from ``policy`` stays put.

    ``eta`` is the l1 membership radius; default half the grid step.
    """
    grid = grid or policy.grid
    if eta is None:
        eta = grid.step / 2
    if eta <= 0:
        raise ValueError("eta must be positive")
    pts = grid.points
    chosen = BellmanStrategy(policy, eta=SNAP_ETA).decide(pts)
    inside = np.abs(chosen - pts).sum(axis=1) <= eta
    members = np.flatnonzero(inside)
    if members.size == 0:
        return NoTradeRegion(members, pts[members], None, None)
    return NoTradeRegion(members, pts[members], pts[members].min(axis=0), pts[members].max(axis=0))


def region_contains(region: NoTradeRegion, grid: SimplexGrid, point) -> bool:
    """True when every vertex of the grid cell carrying ``point`` is a
    member (i.e. ``point`` lies in the union of member cells)."""
    idx, wts = barycentric(grid, np.asarray(point, dtype=float))
    used = idx[wts > 1e-12]
    return bool(np.isin(used, region.members).all())


def best_fixed_mix(
    model: ReturnModel,
    horizon: int,
    n_paths: int,
    seed: int,
    schedule: CostSchedule,
    step: float = 0.01,
    threads: int = 1,
) -> tuple[np.ndarray, float]:
    """Two-asset fixed-mix proportion with the best mean final log-wealth on
    the given path set.

    Coarse pass at 5x ``step`` then a local pass at ``step``; returns the
    target and its mean log-wealth.
    """
    if model.d != 2:
        raise ValueError("proportion scan is defined for two assets")
    cache: dict[int, float] = {}
    n_steps = round(1 / step)
    chunks = [sample_paths(model, horizon, min(CHUNK, n_paths - a), seed, start=a)
              for a in range(0, n_paths, CHUNK)]

    def score(k: int) -> float:
        if k not in cache:
            strat = FixedMix(np.array([k / n_steps, 1 - k / n_steps]))
            if threads > 1:
                with ThreadPoolExecutor(max_workers=threads) as pool:
                    parts = list(pool.map(lambda c: simulate_batch(strat, c, schedule), chunks))
            else:
                parts = [simulate_batch(strat, c, schedule) for c in chunks]
            total = sum(float(p.final_log_wealth.sum()) for p in parts)
            cache[k] = total / n_paths
        return cache[k]

    coarse = range(0, n_steps + 1, 5)
    k0 = max(coarse, key=lambda k: (score(k), -k))
    fine = range(max(0, k0 - 5), min(n_steps, k0 + 5) + 1)
    k = max(fine, key=lambda k: (score(k), -k))
    return np.array([k / n_steps, 1 - k / n_steps]), score(k)
