"""Entropic Bellman operator on a simplex grid and value iteration.

The operator is

    Tv(pi) = max_{pi'} [ log s(pi, pi') + Q_v(pi') ],
    Q_v(pi') = mu_gamma( log<pi', w> + v(G(pi', w)) ),

where the cost term leaves the certainty equivalent by translation
invariance. ``Q_v`` does not depend on the pre-trade state, so one sweep is
``M`` certainty equivalents plus a max over an ``M x M`` table of log decay
factors that is computed once per problem.

Values are kept in log-wealth units: a fixed point ``lambda + v = Tv`` has
``lambda`` equal to the optimal long-run certainty-equivalent growth rate.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .costs import CostSchedule, decay_factor, decay_factors, decay_lower_bound
from .entropic import ce_kernel, entropic_utility
from .geometry import (
    Policy,
    SimplexGrid,
    ValueFunction,
    barycentric,
    check_weights,
    nearest,
)
from .market import ScenarioSet

log = logging.getLogger(__name__)

# memory budget (float64 entries) for (candidate, scenario, vertex) blocks
_BLOCK = 4_000_000


@dataclass(frozen=True)
class SearchConfig:
    """How the maximization over post-trade weights is carried out.

    ``refine`` adds coordinate descent around the grid argmax, moving weight
    between pairs of assets with step sizes from the grid step down to
    ``step / min_divisor``.
    """

    refine: bool = False
    min_divisor: int = 64
    max_passes: int = 8
    interpolation: str = "linear"
    tie_tol: float = 1e-12

    def __post_init__(self):
        if self.interpolation not in ("linear", "nearest"):
            raise ValueError(f"unknown interpolation mode {self.interpolation!r}")
        if self.min_divisor < 1 or self.max_passes < 1:
            raise ValueError("min_divisor and max_passes must be positive")


@dataclass(frozen=True)
class ZBounds:
    z_minus: float
    z_plus: float


@dataclass
class SolveReport:
    value: ValueFunction
    policy: Policy
    lambda_hat: float
    lambda_halfwidth: float
    iterations: int
    span_history: list[float]
    residual_span: float
    converged: bool
    gamma: float = 0.0
    tol: float | None = None


class NonConvergenceError(RuntimeError):
    def __init__(self, report: SolveReport):
        super().__init__(
            f"value iteration stopped after {report.iterations} iterations with "
            f"span(Tv - v) = {report.span_history[-1]:.3g} above tol {report.tol:.3g}"
        )
        self.report = report


def span(v) -> float:
    """Span seminorm ``(max - min) / 2``."""
    v = v.values if isinstance(v, ValueFunction) else np.asarray(v, dtype=float)
    return 0.5 * float(v.max() - v.min())


def center(vf: ValueFunction) -> tuple[ValueFunction, float]:
    """Shift values so that max = -min; returns the shifted function and the
    subtracted constant."""
    c = 0.5 * float(vf.values.max() + vf.values.min())
    return ValueFunction(vf.grid, vf.values - c), c


def step_value(pre, post, scenarios: ScenarioSet, gamma: float, schedule: CostSchedule) -> float:
    """One-period certainty equivalent of log-growth after rebalancing
    ``pre -> post``."""
    post = check_weights(post)
    growth = np.log(scenarios.gross @ post)
    return entropic_utility(growth, scenarios.weights, gamma) + math.log(
        decay_factor(pre, post, schedule)
    )


def z_bounds(scenarios: ScenarioSet, gamma: float, schedule: CostSchedule) -> ZBounds:
    """Bounds on every one-step certainty equivalent for risk parameters
    between ``gamma`` and 0."""
    if gamma == 0:
        raise ValueError("bounds need a nonzero risk parameter")
    r = scenarios.log_returns
    d = scenarios.d
    ce = np.array([entropic_utility(r[:, i], scenarios.weights, gamma) for i in range(d)])
    mean_abs = (np.abs(r) * scenarios.weights[:, None]).sum(axis=0)
    slack = d * mean_abs.max() + math.log(d) / abs(gamma)
    z_minus = -abs(ce.min()) - slack + math.log(decay_lower_bound(schedule))
    z_plus = abs(ce.max()) + slack
    return ZBounds(float(z_minus), float(z_plus))


def _argmax_first(table: np.ndarray, tie_tol: float) -> tuple[np.ndarray, np.ndarray]:
    """Row maxima and the first column attaining them up to a relative
    tolerance (ties go to the lexicographically smallest candidate)."""
    best = table.max(axis=-1)
    thresh = best - tie_tol * (1.0 + np.abs(best))
    arg = np.argmax(table >= thresh[..., None], axis=-1)
    return best, arg


class BellmanOperator:
    """Precomputed one-step structure for a fixed (grid, scenarios, gamma,
    costs) problem; calling it applies the operator to a value array."""

    def __init__(
        self,
        grid: SimplexGrid,
        scenarios: ScenarioSet,
        gamma: float,
        schedule: CostSchedule,
        search: SearchConfig | None = None,
    ):
        if scenarios.d != grid.d or schedule.d != grid.d:
            raise ValueError("grid, scenarios and cost schedule disagree on dimension")
        self.grid = grid
        self.scenarios = scenarios
        self.gamma = float(gamma)
        self.schedule = schedule
        self.search = search or SearchConfig()

        cand = grid.points
        self._logport, self._idx, self._wts = self._transition(cand)
        self.log_decay = self._decay_table(grid.points)

    # -- precomputation -------------------------------------------------

    def _transition(self, cand: np.ndarray):
        """log portfolio growth and interpolation stencils of the drifted
        weights for candidate post-trade weights ``cand``."""
        W = self.scenarios.gross
        m, n, d = len(cand), len(W), self.grid.d
        port = cand @ W.T
        logport = np.log(port)
        if self.search.interpolation == "nearest":
            idx = np.empty((m, n), dtype=np.int32)
        else:
            idx = np.empty((m, n, d), dtype=np.int32)
            wts = np.empty((m, n, d))
        rows = max(1, _BLOCK // (n * d))
        for a in range(0, m, rows):
            b = min(m, a + rows)
            moved = cand[a:b, None, :] * W[None, :, :] / port[a:b, :, None]
            if self.search.interpolation == "nearest":
                idx[a:b] = nearest(self.grid, moved)
            else:
                i, w = barycentric(self.grid, moved)
                idx[a:b] = i
                wts[a:b] = w
        if self.search.interpolation == "nearest":
            return logport, idx, None
        return logport, idx, wts

    def _decay_table(self, pts: np.ndarray) -> np.ndarray:
        m = len(pts)
        out = np.empty((m, m))
        rows = max(1, _BLOCK // (m * self.grid.d * (self.grid.d + 2)))
        for a in range(0, m, rows):
            b = min(m, a + rows)
            out[a:b] = np.log(decay_factors(pts[a:b, None, :], pts[None, :, :], self.schedule))
        return out

    # -- evaluation -----------------------------------------------------

    def _ce(self, vals: np.ndarray, gamma) -> np.ndarray:
        """Certainty equivalent along the last (scenario) axis."""
        gamma = np.asarray(gamma, dtype=float)
        g = gamma.reshape(gamma.shape + (1,) * (vals.ndim - 1 - gamma.ndim))
        return ce_kernel(vals, self.scenarios.weights, g)

    def _future(self, values: np.ndarray, idx, wts) -> np.ndarray:
        if wts is None:
            return values[..., idx]
        return (values[..., idx] * wts).sum(axis=-1)

    def continuation(self, values, gamma=None, scale: float = 1.0) -> np.ndarray:
        """``Q(pi') = mu_gamma(log<pi', w> + scale * v(G(pi', w)))`` on the grid.

        ``values`` may be ``(M,)`` or a stack ``(K, M)``, with ``gamma`` a
        scalar or one parameter per stacked row.
        """
        gamma = self.gamma if gamma is None else gamma
        values = np.asarray(values, dtype=float)
        vals = self._logport + scale * self._future(values, self._idx, self._wts)
        return self._ce(vals, gamma)

    def continuation_at(self, cand: np.ndarray, values: np.ndarray) -> np.ndarray:
        """``Q`` at arbitrary candidate weights (used by the refinement)."""
        logport, idx, wts = self._transition(cand)
        return self._ce(logport + self._future(values, idx, wts), self.gamma)

    def __call__(self, values) -> tuple[np.ndarray, np.ndarray]:
        """Apply the operator; returns ``(Tv, targets)`` on the grid."""
        values = np.asarray(values, dtype=float)
        q = self.continuation(values)
        table = self.log_decay + q[None, :]
        best, arg = _argmax_first(table, self.search.tie_tol)
        targets = self.grid.points[arg].copy()
        if self.search.refine:
            best, targets = self._refine(values, best, targets)
        bad = ~np.isfinite(best)
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise FloatingPointError(
                f"non-finite Bellman value at grid point {self.grid.points[i].tolist()}"
            )
        return best, targets

    def _refine(self, values, best, targets):
        """Pairwise-transfer coordinate descent started at the grid argmax."""
        pts = self.grid.points
        d = self.grid.d
        tol = self.search.tie_tol
        cur = targets.copy()
        h = self.grid.step
        while h >= self.grid.step / self.search.min_divisor * (1 - 1e-9):
            for _ in range(self.search.max_passes):
                moved_any = False
                for a in range(d):
                    for b in range(d):
                        if a == b:
                            continue
                        amt = np.minimum(h, cur[:, a])
                        live = np.flatnonzero(amt > 0)
                        if live.size == 0:
                            continue
                        cand = cur[live].copy()
                        cand[:, a] -= amt[live]
                        cand[:, b] += amt[live]
                        cand[:, a] = np.maximum(cand[:, a], 0.0)
                        uniq, inv = np.unique(cand, axis=0, return_inverse=True)
                        q = self.continuation_at(uniq, values)[inv.ravel()]
                        obj = q + np.log(decay_factors(pts[live], cand, self.schedule))
                        better = obj > best[live] + tol * (1.0 + np.abs(best[live]))
                        if better.any():
                            moved_any = True
                            rows = live[better]
                            best[rows] = obj[better]
                            cur[rows] = cand[better]
                if not moved_any:
                    break
            h /= 2
        return best, cur


def apply_operator(
    vf: ValueFunction,
    scenarios: ScenarioSet,
    gamma: float,
    schedule: CostSchedule,
    search: SearchConfig | None = None,
    operator: BellmanOperator | None = None,
) -> tuple[ValueFunction, Policy]:
    """One application of the Bellman operator with its maximizers."""
    op = operator or BellmanOperator(vf.grid, scenarios, gamma, schedule, search)
    tv, targets = op(vf.values)
    return ValueFunction(vf.grid, tv), Policy(vf.grid, targets)


def solve_ergodic(
    scenarios: ScenarioSet,
    gamma: float,
    schedule: CostSchedule,
    grid: SimplexGrid,
    tol: float = 1e-6,
    max_iter: int = 200,
    *,
    fixed_iters: int | None = None,
    search: SearchConfig | None = None,
    operator: BellmanOperator | None = None,
    raise_on_failure: bool = True,
) -> SolveReport:
    """Relative value iteration ``v_k = center(T v_{k-1})`` from ``v_0 = 0``.

    Iteration ``k`` records ``span(T v_{k-1} - v_{k-1})`` and keeps the
    maximizer of ``T v_{k-1}`` as the policy. Stops at the first ``k`` whose
    recorded span is ``<= tol``, or after exactly ``fixed_iters`` iterations
    when that is given. One further application at the final ``v`` yields the
    reported residual ``span(Tv - v)`` and ``lambda_hat``, the midpoint of
    the range of ``Tv - v``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if fixed_iters is not None and fixed_iters < 1:
        raise ValueError("fixed_iters must be at least 1")
    op = operator or BellmanOperator(grid, scenarios, gamma, schedule, search)
    v = np.zeros(len(grid))
    tv, targets = op(v)
    history: list[float] = []
    k = 0
    while True:
        k += 1
        step = span(tv - v)
        history.append(step)
        log.debug("iteration %d: span(Tv - v) = %.3e", k, step)
        v, policy_targets = tv - 0.5 * (tv.max() + tv.min()), targets
        tv, targets = op(v)
        done = k >= fixed_iters if fixed_iters is not None else step <= tol
        if done or (fixed_iters is None and k >= max_iter):
            break
    diff = tv - v
    resid = span(diff)
    targets = policy_targets

    report = SolveReport(
        value=ValueFunction(grid, v),
        policy=Policy(grid, targets),
        lambda_hat=0.5 * float(diff.max() + diff.min()),
        lambda_halfwidth=resid,
        iterations=k,
        span_history=history,
        residual_span=resid,
        converged=fixed_iters is not None or history[-1] <= tol,
        gamma=float(gamma),
        tol=tol,
    )
    if not report.converged and raise_on_failure:
        raise NonConvergenceError(report)
    return report


@dataclass
class DiscountedDiagnostics:
    alpha: float
    stages: int
    sup_diffs: list[float] = field(default_factory=list)
    tail_bounds: list[float] = field(default_factory=list)
    bounds: ZBounds | None = None


def discount_stages(gamma: float, alpha: float, floor: float = 1e-6) -> int:
    """Number of deflation stages until ``|gamma| e^{-alpha K} <= floor``."""
    if abs(gamma) <= floor:
        return 0
    return int(math.ceil(math.log(abs(gamma) / floor) / alpha))


def solve_discounted(
    scenarios: ScenarioSet,
    gamma: float,
    schedule: CostSchedule,
    grid: SimplexGrid,
    alpha: float,
    n_iter: int,
    *,
    operator: BellmanOperator | None = None,
) -> tuple[ValueFunction, DiscountedDiagnostics]:
    """Iterate the discounted operator ``n_iter`` times from 0.

    The continuation is discounted by ``e^{-alpha}`` and evaluated under the
    deflated risk parameter ``gamma e^{-alpha}``, so the iteration runs on a
    table of stages ``k = 0..K`` with parameters ``gamma e^{-alpha k}``;
    stage ``K + 1`` reuses stage ``K``. Diagnostics compare the sup distance
    of successive iterates (over all stages) with the geometric tail bound
    ``(z+ - z-) e^{-n alpha} / (1 - e^{-alpha})``, both in log-wealth units.
    Maximization is over grid candidates only.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    op = operator or BellmanOperator(grid, scenarios, gamma, schedule, SearchConfig())
    K = discount_stages(gamma, alpha)
    gammas = gamma * np.exp(-alpha * np.arange(K + 1))
    disc = math.exp(-alpha)
    zb = z_bounds(scenarios, gamma, schedule)
    diag = DiscountedDiagnostics(alpha=alpha, stages=K, bounds=zb)

    u = np.zeros((K + 1, len(grid)))
    for n in range(n_iter):
        nxt = np.concatenate([u[1:], u[-1:]], axis=0)
        q = op.continuation(nxt, gammas, scale=disc)
        table = op.log_decay[None, :, :] + q[:, None, :]
        new = table.max(axis=-1)
        diag.sup_diffs.append(float(np.abs(new - u).max()))
        diag.tail_bounds.append((zb.z_plus - zb.z_minus) * math.exp(-n * alpha) / (1 - disc))
        u = new
    return ValueFunction(grid, u[0]), diag
