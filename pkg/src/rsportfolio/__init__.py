"""Risk-sensitive long-run portfolio optimization with proportional
transaction costs."""

__version__ = "0.1.0"

from .bellman import (
    BellmanOperator,
    NonConvergenceError,
    SearchConfig,
    SolveReport,
    apply_operator,
    solve_discounted,
    solve_ergodic,
)
from .costs import CostSchedule, decay_factor, penalty
from .entropic import entropic_utility
from .evaluation import Metrics, evaluate_mc, no_trade_region, trading_stats
from .geometry import Policy, SimplexGrid, ValueFunction, build_grid, drift, interpolate
from .market import DiscreteReturnModel, GaussianReturnModel, ScenarioSet
from .markowitz import solve_mean_variance
from .strategies import BellmanStrategy, BuyAndHold, FixedMix, NoTrade, decide, simulate_wealth
