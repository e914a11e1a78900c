"""Simplex state space: weight checks, the drift map, lattice grids and
piecewise-linear interpolation on the Freudenthal triangulation.

A grid of step ``1/n`` on the unit simplex in R^d is the set of points
``k / n`` with ``k`` a nonnegative integer vector summing to ``n``. In the
cumulative coordinates ``y_j = k_1 + ... + k_j`` (j < d) the simplex becomes
``0 <= y_1 <= ... <= y_{d-1} <= n``, which is a union of Kuhn simplices of
the integer lattice, so barycentric interpolation reduces to sorting
fractional parts.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

SIMPLEX_TOL = 1e-10
# negatives this small are treated as rounding noise and clamped to zero
CLAMP_TOL = 1e-12


class SimplexError(ValueError):
    """Raised when a vector is not (numerically) on the unit simplex."""


def check_weights(w, tol: float = SIMPLEX_TOL) -> np.ndarray:
    """Validate portfolio weights and return them as a float array.

    Works on a single vector or on a stack of vectors (last axis = assets).
    Tiny negatives (>= -1e-12) are clamped and the result renormalized.
    """
    w = np.array(w, dtype=float)
    if w.ndim == 0 or w.shape[-1] < 1:
        raise SimplexError("weights must be a non-empty vector")
    if not np.all(np.isfinite(w)):
        raise SimplexError("weights must be finite")
    if np.any(w < -CLAMP_TOL):
        raise SimplexError(f"negative weight {w.min():.3g}")
    total = w.sum(axis=-1)
    if np.any(np.abs(total - 1.0) > tol):
        raise SimplexError(f"weights sum to {np.ravel(total)[0]!r}, not 1")
    w = np.clip(w, 0.0, None)
    return w / w.sum(axis=-1, keepdims=True)


def drift(pi, w) -> np.ndarray:
    """Weights after one period of gross returns ``w`` with no trading.

    ``G(pi, w) = pi * w / <pi, w>``. Broadcasts over leading axes.
    """
    pi = np.asarray(pi, dtype=float)
    w = np.asarray(w, dtype=float)
    if np.any(w <= 0) or not np.all(np.isfinite(w)):
        raise ValueError("gross returns must be finite and strictly positive")
    out = pi * w
    out /= out.sum(axis=-1, keepdims=True)
    return out


@dataclass(frozen=True, eq=False)
class SimplexGrid:
    """Lattice points of step ``1/n`` on the simplex in R^d, in
    lexicographic order of their integer coordinates."""

    d: int
    n: int
    lattice: np.ndarray = field(repr=False)
    points: np.ndarray = field(repr=False)
    # lookup[y_1, ..., y_{d-1}] -> ordinal (or -1 outside the simplex)
    lookup: np.ndarray = field(repr=False)

    @property
    def step(self) -> float:
        return 1.0 / self.n

    def __len__(self) -> int:
        return len(self.points)

    def index_of(self, k) -> int:
        """Ordinal of the lattice point with integer coordinates ``k``."""
        k = np.asarray(k, dtype=int)
        y = np.cumsum(k[:-1])
        return int(self.lookup[tuple(y)])


def build_grid(d: int, step: float) -> SimplexGrid:
    if d < 2:
        raise ValueError("grid dimension must be at least 2")
    if step <= 0 or step > 1:
        raise ValueError("step must lie in (0, 1]")
    n = round(1.0 / step)
    if abs(n * step - 1.0) > 1e-9:
        raise ValueError(f"step {step} does not divide 1")

    lattice = []
    # lexicographic in k: iterate k_1..k_{d-1} ascending, k_d is implied
    for head in itertools.product(range(n + 1), repeat=d - 1):
        s = sum(head)
        if s <= n:
            lattice.append(head + (n - s,))
    lattice = np.array(lattice, dtype=np.int64)
    assert len(lattice) == math.comb(n + d - 1, d - 1)

    lookup = np.full((n + 1,) * (d - 1), -1, dtype=np.int64)
    cum = np.cumsum(lattice[:, :-1], axis=1)
    lookup[tuple(cum.T)] = np.arange(len(lattice))
    points = lattice / n
    for arr in (lattice, points, lookup):
        arr.setflags(write=False)
    return SimplexGrid(d=d, n=n, lattice=lattice, points=points, lookup=lookup)


def barycentric(grid: SimplexGrid, pts) -> tuple[np.ndarray, np.ndarray]:
    """Vertex ordinals and barycentric weights of ``pts`` on the grid.

    Returns ``(idx, wts)`` of shape ``(..., d)``; interpolating node values
    ``v`` at ``pts`` is ``(v[idx] * wts).sum(-1)``. Exact at nodes and
    reproduces affine functions.
    """
    pts = np.asarray(pts, dtype=float)
    shape = pts.shape[:-1]
    d, n = grid.d, grid.n
    flat = pts.reshape(-1, d)

    y = np.cumsum(flat[:, :-1], axis=1) * n
    # lattice points must hit their node exactly despite cumsum rounding
    r = np.round(y)
    y = np.where(np.abs(y - r) < 1e-9, r, y)
    np.clip(y, 0.0, n, out=y)
    base = np.minimum(np.floor(y), n - 1).astype(np.int64)
    frac = y - base
    order = np.argsort(-frac, axis=1, kind="stable")
    fs = np.take_along_axis(frac, order, axis=1)

    m = d - 1
    wts = np.empty((len(flat), d))
    wts[:, 0] = 1.0 - fs[:, 0]
    if m > 1:
        wts[:, 1:m] = fs[:, :-1] - fs[:, 1:]
    wts[:, m] = fs[:, -1]

    verts = np.empty((len(flat), d, m), dtype=np.int64)
    verts[:, 0] = base
    rows = np.arange(len(flat))
    cur = base.copy()
    for k in range(m):
        cur[rows, order[:, k]] += 1
        verts[:, k + 1] = cur
    np.clip(verts, 0, n, out=verts)
    idx = grid.lookup[tuple(np.moveaxis(verts, -1, 0))]

    bad = idx < 0
    if bad.any():
        # off-simplex vertices can only carry rounding-level weight
        if np.any(wts[bad] > 1e-9):
            raise SimplexError("interpolation point lies outside the simplex")
        wts[bad] = 0.0
        idx[bad] = 0
        wts /= wts.sum(axis=1, keepdims=True)
    return idx.reshape(shape + (d,)), wts.reshape(shape + (d,))


def nearest(grid: SimplexGrid, pts) -> np.ndarray:
    """Ordinal of the nearest lattice point (largest-remainder rounding)."""
    pts = np.asarray(pts, dtype=float)
    shape = pts.shape[:-1]
    flat = pts.reshape(-1, grid.d) * grid.n
    k = np.floor(flat).astype(np.int64)
    short = grid.n - k.sum(axis=1)
    rem = flat - k
    order = np.argsort(-rem, axis=1, kind="stable")
    rank = np.argsort(order, axis=1)
    k += rank < short[:, None]
    cum = np.cumsum(k[:, :-1], axis=1)
    return grid.lookup[tuple(cum.T)].reshape(shape)


@dataclass(frozen=True, eq=False)
class ValueFunction:
    grid: SimplexGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (len(self.grid),):
            raise ValueError("one value per grid point required")
        if not np.all(np.isfinite(values)):
            raise ValueError("value function must be finite")
        object.__setattr__(self, "values", values)


@dataclass(frozen=True, eq=False)
class Policy:
    """Target post-trade weights for every grid point."""

    grid: SimplexGrid
    targets: np.ndarray

    def __post_init__(self):
        targets = np.asarray(self.targets, dtype=float)
        if targets.shape != self.grid.points.shape:
            raise ValueError("one target vector per grid point required")
        check_weights(targets)
        object.__setattr__(self, "targets", targets)


def interpolate(vf: ValueFunction, pi, mode: str = "linear"):
    """Value of ``vf`` at arbitrary simplex point(s) ``pi``."""
    pi = check_weights(pi)
    if pi.shape[-1] != vf.grid.d:
        raise SimplexError(f"point has {pi.shape[-1]} weights, grid has {vf.grid.d}")
    if mode == "nearest":
        out = vf.values[nearest(vf.grid, pi)]
    elif mode == "linear":
        idx, wts = barycentric(vf.grid, pi)
        out = (vf.values[idx] * wts).sum(axis=-1)
    else:
        raise ValueError(f"unknown interpolation mode {mode!r}")
    return float(out) if pi.ndim == 1 else out


def interpolate_targets(policy: Policy, pi, mode: str = "linear") -> np.ndarray:
    """Policy targets at arbitrary simplex point(s), as a convex combination
    of the node targets (so the result stays on the simplex)."""
    pi = np.asarray(pi, dtype=float)
    if mode == "nearest":
        return policy.targets[nearest(policy.grid, pi)]
    idx, wts = barycentric(policy.grid, pi)
    out = (policy.targets[idx] * wts[..., None]).sum(axis=-2)
    return out / out.sum(axis=-1, keepdims=True)
