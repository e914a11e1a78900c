"""Experiment configuration files (TOML).

Schema (every table optional unless noted)::

    name = "example1"
    gamma = -0.5                      # required

    [model]                           # required
    kind = "discrete"                 # or "gaussian"
    gross_returns = [[1.5, 0.5], [0.6, 1.8]]   # discrete: this or log_returns
    probabilities = [0.5, 0.5]
    # gaussian: mean = [...], cov = [[...], ...]

    [costs]                           # required
    buy = [0.1, 0.2]
    sell = [0.2, 0.1]

    [solver]
    grid_step = 0.005
    tol = 1e-6
    max_iter = 200
    fixed_iters = 8                   # omit for tolerance-based stopping
    refine = false
    interpolation = "linear"          # or "nearest"
    n_scenarios = 4096                # gaussian models only
    scenario_seed = 7
    antithetic = false

    [evaluation]
    horizon = 250
    n_paths = 20000
    seed = 2024
    path_horizon = 5000               # for `simulate`
    snap_eta = 1e-3
    start = "uniform"                 # or a weight vector

    [[evaluation.strategies]]
    name = "Buy-and-hold asset 1"
    kind = "buy_and_hold"             # buy_and_hold | fixed_mix | bellman | none
    asset = 0
    # fixed_mix: target = [..] | "markowitz" | "best_proportion"
    # bellman:   gamma = -0.0005 (optional), policy = "policy.csv" (optional)
"""

from __future__ import annotations

import re
from dataclasses import asdict, dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import numpy as np

from .costs import CostSchedule
from .market import DiscreteReturnModel, GaussianReturnModel, ReturnModel

BUNDLED = Path(__file__).parent / "configs"
STRATEGY_KINDS = ("buy_and_hold", "fixed_mix", "bellman", "none")


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str, line: int | None = None):
        where = f"line {line}, " if line else ""
        super().__init__(f"{where}field '{field_name}': {message}")
        self.field = field_name
        self.line = line


@dataclass
class SolverSettings:
    grid_step: float = 0.02
    tol: float = 1e-6
    max_iter: int = 200
    fixed_iters: int | None = None
    refine: bool = False
    interpolation: str = "linear"
    n_scenarios: int = 4096
    scenario_seed: int = 7
    antithetic: bool = False


@dataclass
class StrategySpec:
    name: str
    kind: str
    asset: int | None = None
    target: list[float] | str | None = None
    gamma: float | None = None
    policy: str | None = None
    start: list[float] | None = None


@dataclass
class EvaluationSettings:
    horizon: int = 250
    n_paths: int = 20000
    seed: int = 2024
    path_horizon: int = 5000
    snap_eta: float = 1e-3
    start: str | list[float] = "uniform"
    strategies: list[StrategySpec] = field(default_factory=list)


@dataclass
class ExperimentConfig:
    name: str
    gamma: float
    model_spec: dict
    buy: list[float]
    sell: list[float]
    solver: SolverSettings = field(default_factory=SolverSettings)
    evaluation: EvaluationSettings = field(default_factory=EvaluationSettings)
    source: str | None = None

    @property
    def d(self) -> int:
        return len(self.buy)

    def model(self) -> ReturnModel:
        spec = self.model_spec
        if spec["kind"] == "discrete":
            if "gross_returns" in spec:
                return DiscreteReturnModel.from_gross(spec["gross_returns"], spec["probabilities"])
            return DiscreteReturnModel(spec["log_returns"], spec["probabilities"])
        return GaussianReturnModel(spec["mean"], spec["cov"])

    def schedule(self) -> CostSchedule:
        return CostSchedule(self.buy, self.sell)

    def to_dict(self) -> dict:
        out = asdict(self)
        out.pop("source")
        out["model"] = out.pop("model_spec")
        out["costs"] = {"buy": out.pop("buy"), "sell": out.pop("sell")}
        return out


def _line_of(text: str, key: str) -> int | None:
    pat = re.compile(rf"^\s*{re.escape(key)}\s*=", re.MULTILINE)
    m = pat.search(text)
    return text.count("\n", 0, m.start()) + 1 if m else None


class _Reader:
    def __init__(self, text: str):
        self.text = text

    def fail(self, path: str, msg: str):
        raise ConfigError(path, msg, _line_of(self.text, path.rsplit(".", 1)[-1].split("[")[0]))

    def table(self, data: dict, path: str, allowed: set[str], required: set[str] = frozenset()):
        if not isinstance(data, dict):
            self.fail(path, "expected a table")
        for key in data:
            if key not in allowed:
                self.fail(f"{path}.{key}" if path else key, "unknown key")
        for key in required:
            if key not in data:
                raise ConfigError(f"{path}.{key}" if path else key, "missing required field")
        return data

    def number(self, data, key, path, *, integer=False, positive=False, default=None):
        if key not in data:
            return default
        v = data[key]
        ok = isinstance(v, int) if integer else isinstance(v, (int, float))
        if isinstance(v, bool) or not ok:
            self.fail(f"{path}.{key}" if path else key, "expected an integer" if integer else "expected a number")
        if positive and v <= 0:
            self.fail(f"{path}.{key}" if path else key, "must be positive")
        return v

    def vector(self, v, path, d=None):
        try:
            arr = np.asarray(v, dtype=float)
        except (TypeError, ValueError):
            self.fail(path, "expected a list of numbers")
        if arr.ndim != 1 or (d is not None and len(arr) != d):
            self.fail(path, f"expected a vector of length {d}" if d else "expected a vector")
        return [float(x) for x in arr]

    def matrix(self, v, path):
        try:
            arr = np.asarray(v, dtype=float)
        except (TypeError, ValueError):
            self.fail(path, "expected a matrix of numbers")
        if arr.ndim != 2:
            self.fail(path, "expected a matrix")
        return arr.tolist()


def parse_config(text: str, source: str | None = None) -> ExperimentConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("<syntax>", str(exc)) from exc
    r = _Reader(text)
    r.table(raw, "", {"name", "gamma", "model", "costs", "solver", "evaluation"}, {"gamma", "model", "costs"})

    gamma = r.number(raw, "gamma", "")
    name = raw.get("name", Path(source).stem if source else "experiment")

    costs = r.table(raw["costs"], "costs", {"buy", "sell"}, {"buy", "sell"})
    buy = r.vector(costs["buy"], "costs.buy")
    sell = r.vector(costs["sell"], "costs.sell", len(buy))
    d = len(buy)

    model = r.table(raw["model"], "model", {"kind", "gross_returns", "log_returns", "probabilities", "mean", "cov"}, {"kind"})
    kind = model["kind"]
    if kind == "discrete":
        keys = [k for k in ("gross_returns", "log_returns") if k in model]
        if len(keys) != 1:
            raise ConfigError("model.gross_returns", "give exactly one of gross_returns / log_returns")
        if "probabilities" not in model:
            raise ConfigError("model.probabilities", "missing required field")
        outcomes = r.matrix(model[keys[0]], f"model.{keys[0]}")
        if any(len(row) != d for row in outcomes):
            r.fail(f"model.{keys[0]}", f"every outcome needs {d} entries")
        probs = r.vector(model["probabilities"], "model.probabilities", len(outcomes))
        model_spec = {"kind": kind, keys[0]: outcomes, "probabilities": probs}
    elif kind == "gaussian":
        for key in ("mean", "cov"):
            if key not in model:
                raise ConfigError(f"model.{key}", "missing required field")
        model_spec = {
            "kind": kind,
            "mean": r.vector(model["mean"], "model.mean", d),
            "cov": r.matrix(model["cov"], "model.cov"),
        }
    else:
        r.fail("model.kind", "must be 'discrete' or 'gaussian'")

    solver = SolverSettings()
    if "solver" in raw:
        s = r.table(raw["solver"], "solver", set(SolverSettings.__dataclass_fields__))
        solver.grid_step = r.number(s, "grid_step", "solver", positive=True, default=solver.grid_step)
        solver.tol = r.number(s, "tol", "solver", positive=True, default=solver.tol)
        solver.max_iter = r.number(s, "max_iter", "solver", integer=True, positive=True, default=solver.max_iter)
        solver.fixed_iters = r.number(s, "fixed_iters", "solver", integer=True, default=None)
        if solver.fixed_iters is not None and solver.fixed_iters < 1:
            r.fail("solver.fixed_iters", "must be at least 1")
        solver.n_scenarios = r.number(s, "n_scenarios", "solver", integer=True, positive=True, default=solver.n_scenarios)
        solver.scenario_seed = r.number(s, "scenario_seed", "solver", integer=True, default=solver.scenario_seed)
        for key in ("refine", "antithetic"):
            if key in s:
                if not isinstance(s[key], bool):
                    r.fail(f"solver.{key}", "expected true or false")
                setattr(solver, key, s[key])
        if "interpolation" in s:
            if s["interpolation"] not in ("linear", "nearest"):
                r.fail("solver.interpolation", "must be 'linear' or 'nearest'")
            solver.interpolation = s["interpolation"]

    ev = EvaluationSettings()
    if "evaluation" in raw:
        e = r.table(raw["evaluation"], "evaluation", set(EvaluationSettings.__dataclass_fields__))
        ev.horizon = r.number(e, "horizon", "evaluation", integer=True, positive=True, default=ev.horizon)
        ev.n_paths = r.number(e, "n_paths", "evaluation", integer=True, positive=True, default=ev.n_paths)
        ev.seed = r.number(e, "seed", "evaluation", integer=True, default=ev.seed)
        ev.path_horizon = r.number(e, "path_horizon", "evaluation", integer=True, positive=True, default=ev.path_horizon)
        ev.snap_eta = r.number(e, "snap_eta", "evaluation", positive=True, default=ev.snap_eta)
        if "start" in e:
            ev.start = e["start"] if e["start"] == "uniform" else r.vector(e["start"], "evaluation.start", d)
        for i, item in enumerate(e.get("strategies", [])):
            ev.strategies.append(_strategy(r, item, f"evaluation.strategies[{i}]", d))

    return ExperimentConfig(
        name=name, gamma=float(gamma), model_spec=model_spec, buy=buy, sell=sell,
        solver=solver, evaluation=ev, source=source,
    )


def _strategy(r: _Reader, item, path: str, d: int) -> StrategySpec:
    r.table(item, path, set(StrategySpec.__dataclass_fields__), {"name", "kind"})
    kind = item["kind"]
    if kind not in STRATEGY_KINDS:
        r.fail(f"{path}.kind", f"must be one of {', '.join(STRATEGY_KINDS)}")
    spec = StrategySpec(name=str(item["name"]), kind=kind)
    if kind == "buy_and_hold":
        if "asset" not in item:
            raise ConfigError(f"{path}.asset", "missing required field")
        spec.asset = r.number(item, "asset", path, integer=True)
        if not 0 <= spec.asset < d:
            r.fail(f"{path}.asset", f"must lie in 0..{d - 1}")
    elif kind == "fixed_mix":
        if "target" not in item:
            raise ConfigError(f"{path}.target", "missing required field")
        t = item["target"]
        if isinstance(t, str):
            if t not in ("markowitz", "best_proportion"):
                r.fail(f"{path}.target", "must be a weight vector, 'markowitz' or 'best_proportion'")
            spec.target = t
        else:
            spec.target = r.vector(t, f"{path}.target", d)
    elif kind == "bellman":
        spec.gamma = r.number(item, "gamma", path, default=None)
        spec.policy = item.get("policy")
    elif kind == "none":
        if "start" not in item:
            raise ConfigError(f"{path}.start", "missing required field")
    if "start" in item:
        spec.start = r.vector(item["start"], f"{path}.start", d)
    return spec


def resolve_config_path(name: str) -> Path:
    """A file path, or the name of a bundled config (``example1``)."""
    p = Path(name)
    if p.exists():
        return p
    bundled = BUNDLED / (name if name.endswith(".toml") else f"{name}.toml")
    if bundled.exists():
        return bundled
    raise FileNotFoundError(f"config {name!r} not found")


def load_config(name: str) -> ExperimentConfig:
    path = resolve_config_path(name)
    return parse_config(path.read_text(), str(path))
