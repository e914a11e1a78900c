"""Proportional transaction costs and the capital decay of a rebalance.

Rebalancing from pre-trade weights ``x`` to post-trade weights ``y`` keeps a
fraction ``s`` of wealth, the unique root in ``[s_lo, 1]`` of
``F(w) = w + d(w*y - x) = 1`` where ``d`` is the cost penalty.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import check_weights

@dataclass(frozen=True, eq=False)
class CostSchedule:
    buy: np.ndarray
    sell: np.ndarray

    def __post_init__(self):
        buy = np.asarray(self.buy, dtype=float)
        sell = np.asarray(self.sell, dtype=float)
        if buy.ndim != 1 or buy.shape != sell.shape:
            raise ValueError("buy and sell rates must be vectors of equal length")
        for name, r in (("buy", buy), ("sell", sell)):
            if not np.all((r > 0) & (r < 1)):
                raise ValueError(f"{name} rates must lie in (0, 1)")
        object.__setattr__(self, "buy", buy)
        object.__setattr__(self, "sell", sell)

    @property
    def d(self) -> int:
        return len(self.buy)


def penalty(x, schedule: CostSchedule):
    """``<buy, x^+> + <sell, x^->``, broadcasting over leading axes."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != schedule.d:
        raise ValueError(f"trade vector has {x.shape[-1]} entries, schedule has {schedule.d}")
    out = np.zeros(x.shape[:-1])
    for j in range(schedule.d):
        xj = x[..., j]
        out += np.where(xj > 0, schedule.buy[j] * xj, -schedule.sell[j] * xj)
    return float(out) if out.ndim == 0 else out


def decay_lower_bound(schedule: CostSchedule) -> float:
    """A floor for every decay factor: ``(1 - m) / (1 + m)``, m the largest rate.

    At ``w = s_lo`` the penalty is at most ``m (w + 1)``, hence
    ``F(s_lo) <= s_lo (1 + m) + m = 1``.
    """
    m = max(schedule.buy.max(), schedule.sell.max())
    return (1.0 - m) / (1.0 + m)


def decay_factors(pre, post, schedule: CostSchedule) -> np.ndarray:
    """Decay factors over stacks of (pre, post), solved exactly.

    ``F(w) = w + d(w*post - pre)`` is piecewise linear and increasing in
    ``w`` with kinks at ``pre_j / post_j``, so the root lies on one linear
    segment between consecutive kinks. No validation; callers pass simplex
    points. Rows with ``post == pre`` return exactly 1.
    """
    pre = np.asarray(pre, dtype=float)
    post = np.asarray(post, dtype=float)
    pre, post = np.broadcast_arrays(pre, post)
    s_lo = decay_lower_bound(schedule)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        kinks = np.where(post > 0, pre / post, np.inf)
    ends = np.broadcast_to(np.array([s_lo, 1.0]), pre.shape[:-1] + (2,))
    knots = np.sort(np.concatenate([np.clip(kinks, s_lo, 1.0), ends], axis=-1), axis=-1)
    f = knots + penalty(knots[..., :, None] * post[..., None, :] - pre[..., None, :], schedule)
    # first knot with F >= 1; F(s_lo) <= 1 <= F(1) brackets the root
    j = np.clip(np.argmax(f >= 1.0, axis=-1), 1, knots.shape[-1] - 1)[..., None]
    a = np.take_along_axis(knots, j - 1, axis=-1)[..., 0]
    b = np.take_along_axis(knots, j, axis=-1)[..., 0]
    fa = np.take_along_axis(f, j - 1, axis=-1)[..., 0]
    fb = np.take_along_axis(f, j, axis=-1)[..., 0]
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        s = np.where(fb > fa, a + (1.0 - fa) * (b - a) / (fb - fa), b)
    s = np.clip(s, s_lo, 1.0)
    same = np.all(pre == post, axis=-1)
    return np.where(same, 1.0, s)


def decay_factor(pre, post, schedule: CostSchedule) -> float:
    """Fraction of wealth kept when rebalancing from ``pre`` to ``post``."""
    pre = check_weights(pre)
    post = check_weights(post)
    if pre.ndim != 1 or pre.shape != post.shape or len(pre) != schedule.d:
        raise ValueError("pre and post must be weight vectors matching the schedule")
    return float(decay_factors(pre, post, schedule))
