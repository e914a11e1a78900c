"""Command-line entry point: ``rsportfolio {solve,evaluate,simulate,region,markowitz}``."""

from __future__ import annotations

import argparse
import logging
import sys
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import __version__
from .artifacts import (
    ArtifactError,
    metrics_text,
    read_policy_csv,
    slug,
    write_json,
    write_metrics_csv,
    write_path_csv,
    write_policy_csv,
    write_value_csv,
)
from .bellman import BellmanOperator, NonConvergenceError, SearchConfig, SolveReport, solve_ergodic
from .config import ConfigError, ExperimentConfig, StrategySpec, load_config
from .costs import CostSchedule
from .evaluation import best_fixed_mix, evaluate_mc, no_trade_region, trading_stats
from .geometry import Policy, build_grid
from .market import GaussianReturnModel, ReturnModel, ScenarioSet, sample_path, scenarios_from_discrete, scenarios_from_gaussian
from .markowitz import mean_variance_objective, solve_mean_variance
from .strategies import BellmanStrategy, BuyAndHold, FixedMix, NoTrade, Strategy, simulate_wealth

log = logging.getLogger("rsportfolio")

EXIT_OK, EXIT_CONFIG, EXIT_NONCONVERGED, EXIT_IO = 0, 2, 3, 4


@dataclass
class Experiment:
    """Validated runtime objects built from a config."""

    config: ExperimentConfig
    model: ReturnModel
    schedule: CostSchedule

    @classmethod
    def from_config(cls, cfg: ExperimentConfig) -> "Experiment":
        try:
            model = cfg.model()
        except ValueError as exc:
            raise ConfigError("model", str(exc)) from None
        try:
            schedule = cfg.schedule()
        except ValueError as exc:
            raise ConfigError("costs", str(exc)) from None
        if model.d != cfg.d:
            raise ConfigError("costs.buy", f"cost vectors have {cfg.d} entries but the model has {model.d} assets")
        try:
            build_grid(model.d, cfg.solver.grid_step)
        except ValueError as exc:
            raise ConfigError("solver.grid_step", str(exc)) from None
        return cls(cfg, model, schedule)

    def scenarios(self) -> ScenarioSet:
        s = self.config.solver
        if isinstance(self.model, GaussianReturnModel):
            return scenarios_from_gaussian(self.model, s.n_scenarios, s.scenario_seed, s.antithetic)
        return scenarios_from_discrete(self.model)

    def solve(self, gamma: float | None = None, fixed_iters=..., tol: float | None = None,
              raise_on_failure: bool = True) -> SolveReport:
        s = self.config.solver
        gamma = self.config.gamma if gamma is None else gamma
        fixed = s.fixed_iters if fixed_iters is ... else fixed_iters
        grid = build_grid(self.model.d, s.grid_step)
        search = SearchConfig(refine=s.refine, interpolation=s.interpolation)
        scen = self.scenarios()
        op = BellmanOperator(grid, scen, gamma, self.schedule, search)
        return solve_ergodic(scen, gamma, self.schedule, grid, tol or s.tol, s.max_iter,
                             fixed_iters=fixed, operator=op, raise_on_failure=raise_on_failure)

    def markowitz(self) -> np.ndarray:
        if not isinstance(self.model, GaussianReturnModel):
            raise ConfigError("model.kind", "the mean-variance allocation needs a gaussian model")
        try:
            return solve_mean_variance(self.model.mean, self.model.cov, self.config.gamma)
        except ValueError as exc:
            raise ConfigError("gamma", str(exc)) from None

    def _start(self, spec: StrategySpec):
        ev = self.config.evaluation
        if spec.start is not None:
            return tuple(spec.start)
        return None if ev.start == "uniform" else tuple(ev.start)

    def strategies(self, policy: Policy | None = None, threads: int = 1,
                   base_dir: Path | None = None) -> list[Strategy]:
        """Instantiate the configured strategy list. Bellman strategies use,
        in order: their own policy file, a fresh solve at their own gamma,
        the supplied ``policy``, a fresh solve at the config gamma."""
        ev = self.config.evaluation
        if not ev.strategies:
            raise ConfigError("evaluation.strategies", "strategy list is empty")
        out: list[Strategy] = []
        solved: dict[float, Policy] = {}
        for spec in ev.strategies:
            start = self._start(spec)
            if spec.kind == "buy_and_hold":
                out.append(BuyAndHold(spec.asset, spec.name))
            elif spec.kind == "none":
                out.append(NoTrade(tuple(spec.start), spec.name))
            elif spec.kind == "fixed_mix":
                if spec.target == "markowitz":
                    target = self.markowitz()
                elif spec.target == "best_proportion":
                    target, _ = best_fixed_mix(self.model, ev.horizon, ev.n_paths, ev.seed, self.schedule,
                                               threads=threads)
                else:
                    target = np.asarray(spec.target)
                out.append(FixedMix(target, spec.name, start))
            else:
                if spec.policy is not None:
                    p = Path(spec.policy)
                    if base_dir is not None and not p.is_absolute():
                        p = base_dir / p
                    pol = read_policy_csv(p)
                elif spec.gamma is not None:
                    if spec.gamma not in solved:
                        solved[spec.gamma] = self.solve(spec.gamma).policy
                    pol = solved[spec.gamma]
                elif policy is not None:
                    pol = policy
                else:
                    if self.config.gamma not in solved:
                        solved[self.config.gamma] = self.solve().policy
                    pol = solved[self.config.gamma]
                out.append(BellmanStrategy(pol, spec.name, ev.snap_eta, self.config.solver.interpolation, start))
        return out


def report_payload(report: SolveReport, cfg: ExperimentConfig, elapsed: float) -> dict:
    return {
        "lambda_hat": report.lambda_hat,
        "lambda_halfwidth": report.lambda_halfwidth,
        "iterations": report.iterations,
        "span_history": report.span_history,
        "residual_span": report.residual_span,
        "converged": report.converged,
        "grid_points": len(report.value.grid),
        "gamma": report.gamma,
        "elapsed_seconds": elapsed,
        "version": __version__,
        "config": cfg.to_dict(),
    }


def _effective_config(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    solver = cfg.solver
    if getattr(args, "fixed_iters", None) is not None:
        if args.fixed_iters < 1:
            raise ConfigError("--fixed-iters", "must be at least 1")
        solver = replace(solver, fixed_iters=args.fixed_iters)
    if getattr(args, "tol", None) is not None:
        if args.tol <= 0:
            raise ConfigError("--tol", "must be positive")
        solver = replace(solver, tol=args.tol, fixed_iters=None if args.fixed_iters is None else solver.fixed_iters)
    ev = cfg.evaluation
    if getattr(args, "seed", None) is not None:
        ev = replace(ev, seed=args.seed)
    if getattr(args, "horizon", None) is not None:
        if args.horizon < 1:
            raise ConfigError("--horizon", "must be at least 1")
        ev = replace(ev, path_horizon=args.horizon)
    return replace(cfg, solver=solver, evaluation=ev)


def cmd_solve(args) -> int:
    cfg = _effective_config(args)
    exp = Experiment.from_config(cfg)
    t0 = time.perf_counter()
    report = exp.solve(raise_on_failure=False)
    elapsed = time.perf_counter() - t0
    out = Path(args.out)
    write_value_csv(out / "value.csv", report.value)
    write_policy_csv(out / "policy.csv", report.policy)
    write_json(out / "report.json", report_payload(report, cfg, elapsed))
    print(f"{cfg.name}: {report.iterations} iterations, lambda_hat = {report.lambda_hat:.6f} "
          f"+/- {report.lambda_halfwidth:.2g}, residual span {report.residual_span:.3g}")
    if not report.converged:
        print("value iteration did not reach tol", file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


def _policy_arg(args) -> Policy | None:
    return read_policy_csv(args.policy) if getattr(args, "policy", None) else None


def _base_dir(cfg: ExperimentConfig) -> Path | None:
    return Path(cfg.source).parent if cfg.source else None


def cmd_evaluate(args) -> int:
    cfg = _effective_config(args)
    exp = Experiment.from_config(cfg)
    strategies = exp.strategies(_policy_arg(args), args.threads, _base_dir(cfg))
    ev = cfg.evaluation
    rows = []
    for strat in strategies:
        m = evaluate_mc(strat, exp.model, ev.horizon, ev.n_paths, ev.seed, cfg.gamma, exp.schedule, args.threads)
        rows.append((strat.name, m.row()))
    out = Path(args.out)
    write_metrics_csv(out / "metrics.csv", rows)
    text = metrics_text(rows)
    (out / "metrics.txt").write_text(text)
    print(text, end="")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _effective_config(args)
    exp = Experiment.from_config(cfg)
    strategies = exp.strategies(_policy_arg(args), args.threads, _base_dir(cfg))
    ev = cfg.evaluation
    path = sample_path(exp.model, ev.path_horizon, ev.seed, 0)
    out = Path(args.out)
    for strat in strategies:
        wp = simulate_wealth(strat, path, exp.schedule)
        write_path_csv(out / f"path_{slug(strat.name)}.csv", wp)
        st = trading_stats(wp)
        print(f"{strat.name}: log W(T) = {wp.log_wealth[-1]:.4f}, traded {st.days_traded} of "
              f"{wp.horizon} days, cumulative decay {st.cumulative_decay:.4f}")
    return EXIT_OK


def cmd_region(args) -> int:
    if args.eta is not None and args.eta <= 0:
        raise ConfigError("--eta", "must be positive")
    cfg = None
    if args.policy:
        policy = read_policy_csv(args.policy)
    elif args.config:
        cfg = _effective_config(args)
        policy = Experiment.from_config(cfg).solve().policy
    else:
        raise ConfigError("--policy", "give a policy file or a config to solve")
    region = no_trade_region(policy, eta=args.eta)
    payload = {
        "eta": args.eta if args.eta is not None else policy.grid.step / 2,
        "grid_step": policy.grid.step,
        "members": len(region),
        "lower": region.lower,
        "upper": region.upper,
        "points": region.points,
    }
    if policy.grid.d == 2 and len(region):
        payload["interval"] = list(region.interval())
    write_json(Path(args.out) / "region.json", payload)
    if len(region):
        print(f"{len(region)} grid points hold; lower {np.round(region.lower, 6).tolist()}, "
              f"upper {np.round(region.upper, 6).tolist()}")
    else:
        print("no grid point holds")
    return EXIT_OK


def cmd_markowitz(args) -> int:
    cfg = _effective_config(args)
    exp = Experiment.from_config(cfg)
    w = exp.markowitz()
    obj = mean_variance_objective(w, exp.model.mean, exp.model.cov, cfg.gamma)
    write_json(Path(args.out) / "markowitz.json", {"weights": w, "objective": obj, "gamma": cfg.gamma})
    print("weights", np.round(w, 7).tolist(), "objective", f"{obj:.8g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rsportfolio", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required,
                       help="config file, or a bundled name (example1, example2)")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--seed", type=int, help="override the evaluation seed")
        p.add_argument("--threads", type=int, default=1, help="worker cap; results do not depend on it")
        p.add_argument("--fixed-iters", type=int, help="run exactly N value iterations")
        p.add_argument("--tol", type=float, help="span tolerance (tolerance-based stopping)")

    p = sub.add_parser("solve", help="value iteration; writes value.csv, policy.csv, report.json")
    common(p)
    p.set_defaults(func=cmd_solve)
    for name, func, text in (("evaluate", cmd_evaluate, "Monte Carlo metrics; writes metrics.csv/.txt"),
                             ("simulate", cmd_simulate, "one common path per strategy; writes path_*.csv")):
        p = sub.add_parser(name, help=text)
        common(p)
        p.add_argument("--policy", help="policy.csv for bellman strategies (else solved in-process)")
        if name == "simulate":
            p.add_argument("--horizon", type=int, help="path length (default from config)")
        p.set_defaults(func=func)
    p = sub.add_parser("region", help="no-trade region of a policy; writes region.json")
    common(p, config_required=False)
    p.add_argument("--policy", help="policy.csv (else solved from --config)")
    p.add_argument("--eta", type=float, help="l1 membership radius (default half the grid step)")
    p.set_defaults(func=cmd_region)
    p = sub.add_parser("markowitz", help="long-only mean-variance weights; writes markowitz.json")
    common(p)
    p.set_defaults(func=cmd_markowitz)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "threads", 1) < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NonConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except (ArtifactError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
