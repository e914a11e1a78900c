"""Trading strategies and the cost-aware wealth simulator.

Per period ``t`` the simulator takes pre-trade weights ``pi(t-)``, asks the
strategy for post-trade weights ``pi(t)``, pays the decay ``s(pi(t-), pi(t))``
and accrues ``log<pi(t), w(t+1)>``; the next pre-trade weights are
``G(pi(t), w(t+1))``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .costs import CostSchedule, decay_factors, penalty
from .geometry import Policy, check_weights, interpolate_targets, nearest

SNAP_ETA = 1e-3
# post != pre beyond this l1 distance counts as a trade
TRADE_TOL = 1e-12


@dataclass(frozen=True)
class BuyAndHold:
    asset: int
    name: str = ""

    def initial(self, d: int) -> np.ndarray:
        if not 0 <= self.asset < d:
            raise ValueError(f"asset index {self.asset} out of range for d={d}")
        return np.eye(d)[self.asset]

    def decide(self, pre: np.ndarray) -> np.ndarray:
        return pre


@dataclass(frozen=True)
class NoTrade:
    start: tuple
    name: str = ""

    def initial(self, d: int) -> np.ndarray:
        return check_weights(self.start)

    def decide(self, pre: np.ndarray) -> np.ndarray:
        return pre


@dataclass(frozen=True, eq=False)
class FixedMix:
    target: np.ndarray
    name: str = ""
    start: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "target", check_weights(self.target))

    def initial(self, d: int) -> np.ndarray:
        return _start(self.start, d)

    def decide(self, pre: np.ndarray) -> np.ndarray:
        return np.broadcast_to(self.target, pre.shape).copy()


@dataclass(frozen=True, eq=False)
class BellmanStrategy:
    """Follows a grid policy, interpolated off the grid, and skips trades
    smaller than ``eta`` in l1 distance.

    With ``interpolation="nearest"`` the state is read at its nearest node:
    hold when that node is a fixed point of the policy, else move to the
    node's target.
    """

    policy: Policy
    name: str = ""
    eta: float = SNAP_ETA
    interpolation: str = "linear"
    start: tuple | None = None

    def initial(self, d: int) -> np.ndarray:
        return _start(self.start, d)

    def decide(self, pre: np.ndarray) -> np.ndarray:
        if self.interpolation == "nearest":
            node = nearest(self.policy.grid, pre)
            target = self.policy.targets[node]
            held = np.abs(target - self.policy.grid.points[node]).sum(axis=-1) <= self.eta
            return np.where(held[..., None], pre, target)
        target = interpolate_targets(self.policy, pre, self.interpolation)
        stay = np.abs(target - pre).sum(axis=-1) <= self.eta
        return np.where(stay[..., None], pre, target)


Strategy = BuyAndHold | NoTrade | FixedMix | BellmanStrategy


def _start(start, d: int) -> np.ndarray:
    if start is None:
        return np.full(d, 1.0 / d)
    return check_weights(start)


def decide(strategy: Strategy, pre) -> np.ndarray:
    """Post-trade weights chosen in state ``pre``."""
    return strategy.decide(check_weights(pre))


@dataclass
class WealthPath:
    log_wealth: np.ndarray  # (T + 1,), log W(t-) with log W(0) first
    pre_weights: np.ndarray  # (T, d)
    post_weights: np.ndarray  # (T, d)
    decays: np.ndarray  # (T,)
    traded: np.ndarray  # (T,) bool
    gross: np.ndarray  # (T, d) returns realised after each decision

    @property
    def horizon(self) -> int:
        return len(self.decays)


@dataclass
class BatchResult:
    final_log_wealth: np.ndarray  # (n,)
    days_traded: np.ndarray  # (n,)
    log_decay: np.ndarray  # (n,) summed log decays


def simulate_batch(
    strategy: Strategy, paths: np.ndarray, schedule: CostSchedule, w0: float = 1.0
) -> BatchResult:
    """Run ``strategy`` on gross-return paths ``(n, T, d)`` simultaneously."""
    if w0 <= 0:
        raise ValueError("initial wealth must be positive")
    n, horizon, d = paths.shape
    pre = np.tile(strategy.initial(d), (n, 1))
    logw = np.full(n, np.log(w0))
    traded = np.zeros(n, dtype=np.int64)
    logdec = np.zeros(n)
    for t in range(horizon):
        post = strategy.decide(pre)
        moved = np.abs(post - pre).sum(axis=1) > TRADE_TOL
        s = np.ones(n)
        if moved.any():
            s[moved] = decay_factors(pre[moved], post[moved], schedule)
        ld = np.log(s)
        growth = (post * paths[:, t]).sum(axis=1)
        logw += np.log(growth) + ld
        logdec += ld
        traded += moved
        pre = post * paths[:, t] / growth[:, None]
    return BatchResult(logw, traded, logdec)


def simulate_wealth(
    strategy: Strategy, path: np.ndarray, schedule: CostSchedule, w0: float = 1.0
) -> WealthPath:
    """Single path with full per-period diagnostics."""
    if w0 <= 0:
        raise ValueError("initial wealth must be positive")
    path = np.asarray(path, dtype=float)
    horizon, d = path.shape
    logw = np.empty(horizon + 1)
    logw[0] = np.log(w0)
    pres = np.empty((horizon, d))
    posts = np.empty((horizon, d))
    decays = np.ones(horizon)
    traded = np.zeros(horizon, dtype=bool)
    pre = strategy.initial(d)
    for t in range(horizon):
        post = strategy.decide(pre[None, :])[0]
        pres[t], posts[t] = pre, post
        if np.abs(post - pre).sum() > TRADE_TOL:
            traded[t] = True
            decays[t] = decay_factors(pre, post, schedule)
        growth = (post * path[t]).sum()
        logw[t + 1] = logw[t] + np.log(growth) + np.log(decays[t])
        pre = post * path[t] / growth
    return WealthPath(logw, pres, posts, decays, traded, path.copy())


def volume_oracle_step(n_prev, prices, target, schedule: CostSchedule, tol: float = 1e-14):
    """Rebalance in share units: find wealth ``W`` with
    ``W = W- - d((N - N_prev) * S)`` and ``N = W * target / S``.

    Independent of the weight-space decay routine; used as a test oracle.
    Returns ``(n_new, wealth)``.
    """
    n_prev = np.asarray(n_prev, dtype=float)
    prices = np.asarray(prices, dtype=float)
    target = np.asarray(target, dtype=float)
    if np.any(prices <= 0) or np.any(n_prev < 0):
        raise ValueError("prices must be positive and volumes nonnegative")
    w_pre = float(n_prev @ prices)
    held = n_prev * prices

    def excess(w):
        return w - w_pre + penalty(w * target - held, schedule)

    lo, hi = 0.0, w_pre
    assert excess(lo) <= 0 <= excess(hi)
    while hi - lo > tol * max(w_pre, 1.0):
        mid = 0.5 * (lo + hi)
        if excess(mid) > 0:
            hi = mid
        else:
            lo = mid
    wealth = 0.5 * (lo + hi)
    return wealth * target / prices, wealth
