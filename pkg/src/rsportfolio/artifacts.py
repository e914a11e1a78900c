"""CSV and JSON artifacts.

Floats are written with ``repr`` (shortest string that parses back to the
same double), so tables round-trip bit-exactly.

Column layouts::

    value.csv    w_1..w_d, value
    policy.csv   w_1..w_d, target_1..target_d
    metrics.csv  strategy, mean, std, taylor, entropy, stderr_mean,
                 stderr_entropy, fraction_traded, n_paths, horizon
    path_*.csv   t, log_wealth, pre_1..pre_d, post_1..post_d, decay, traded,
                 gross_1..gross_d
"""

from __future__ import annotations

import csv
import json
import math
import re
from pathlib import Path

import numpy as np

from .geometry import Policy, SimplexGrid, ValueFunction, build_grid
from .strategies import WealthPath


class ArtifactError(ValueError):
    """Malformed input file; ``row`` is the 1-based line number when known."""

    def __init__(self, path, message: str, row: int | None = None):
        where = f"{path}: row {row}: " if row is not None else f"{path}: "
        super().__init__(where + message)
        self.row = row


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _write_rows(path: Path, header: list[str], rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(header)
        for row in rows:
            out.writerow([x if isinstance(x, str) else fmt(x) for x in row])


def write_value_csv(path, vf: ValueFunction) -> None:
    d = vf.grid.d
    header = [f"w_{i + 1}" for i in range(d)] + ["value"]
    _write_rows(path, header, (list(p) + [v] for p, v in zip(vf.grid.points, vf.values)))


def write_policy_csv(path, policy: Policy) -> None:
    d = policy.grid.d
    header = [f"w_{i + 1}" for i in range(d)] + [f"target_{i + 1}" for i in range(d)]
    _write_rows(path, header, (list(p) + list(t) for p, t in zip(policy.grid.points, policy.targets)))


def _read_table(path, prefix: str) -> tuple[np.ndarray, np.ndarray]:
    """Parse a grid table into (points, payload); validates shape and numbers."""
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ArtifactError(path, "empty file", 1)
    header = rows[0]
    d = sum(1 for h in header if re.fullmatch(r"w_\d+", h))
    if d < 2 or header[:d] != [f"w_{i + 1}" for i in range(d)]:
        raise ArtifactError(path, "header must start with w_1..w_d (d >= 2)", 1)
    width = len(header)
    if prefix == "target" and header[d:] != [f"target_{i + 1}" for i in range(d)]:
        raise ArtifactError(path, "expected columns target_1..target_d after the weights", 1)
    if prefix == "value" and header[d:] != ["value"]:
        raise ArtifactError(path, "expected a single 'value' column after the weights", 1)
    data = np.empty((len(rows) - 1, width))
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != width:
            raise ArtifactError(path, f"expected {width} fields, found {len(row)}", i)
        try:
            data[i - 2] = [float(x) for x in row]
        except ValueError as exc:
            raise ArtifactError(path, f"not a number ({exc})", i) from None
        if not np.all(np.isfinite(data[i - 2])):
            raise ArtifactError(path, "non-finite entry", i)
    return data[:, :d], data[:, d:]


def _grid_for(path, points: np.ndarray) -> SimplexGrid:
    count, d = points.shape
    n = 1
    while math.comb(n + d - 1, d - 1) < count:
        n += 1
    if math.comb(n + d - 1, d - 1) != count:
        raise ArtifactError(path, f"{count} rows is not the size of any simplex grid in dimension {d}")
    grid = build_grid(d, 1.0 / n)
    bad = np.flatnonzero(np.abs(points - grid.points).max(axis=1) > 1e-9)
    if bad.size:
        raise ArtifactError(path, "grid point out of lexicographic order or off the lattice", int(bad[0]) + 2)
    return grid


def read_policy_csv(path, grid: SimplexGrid | None = None) -> Policy:
    points, targets = _read_table(path, "target")
    grid = grid or _grid_for(path, points)
    for i, t in enumerate(targets):
        if np.any(t < -1e-10) or abs(t.sum() - 1.0) > 1e-8:
            raise ArtifactError(path, "target is not a point of the simplex", i + 2)
    return Policy(grid, targets)


def read_value_csv(path, grid: SimplexGrid | None = None) -> ValueFunction:
    points, values = _read_table(path, "value")
    grid = grid or _grid_for(path, points)
    return ValueFunction(grid, values[:, 0])


METRIC_COLUMNS = ["mean", "std", "taylor", "entropy", "stderr_mean", "stderr_entropy",
                  "fraction_traded", "n_paths", "horizon"]


def write_metrics_csv(path, rows: list[tuple[str, dict]]) -> None:
    _write_rows(path, ["strategy"] + METRIC_COLUMNS,
                ([name] + [r[c] for c in METRIC_COLUMNS] for name, r in rows))


def metrics_text(rows: list[tuple[str, dict]]) -> str:
    """Aligned table: strategy, mean, std, mean + gamma/2 var, entropy."""
    cols = ["mean", "std", "taylor", "entropy"]
    labels = ["Mean", "Std", "Mean+(g/2)Var", "Entropy"]
    width = max([len("Strategy")] + [len(name) for name, _ in rows])
    lines = ["  ".join(["Strategy".ljust(width)] + [lab.rjust(14) for lab in labels])]
    for name, r in rows:
        lines.append("  ".join([name.ljust(width)] + [f"{r[c]:14.6f}" for c in cols]))
    return "\n".join(lines) + "\n"


def write_path_csv(path, wp: WealthPath) -> None:
    d = wp.pre_weights.shape[1]
    header = (["t", "log_wealth"] + [f"pre_{i + 1}" for i in range(d)] + [f"post_{i + 1}" for i in range(d)]
              + ["decay", "traded"] + [f"gross_{i + 1}" for i in range(d)])
    rows = (
        [t, wp.log_wealth[t]] + list(wp.pre_weights[t]) + list(wp.post_weights[t])
        + [wp.decays[t], bool(wp.traded[t])] + list(wp.gross[t])
        for t in range(wp.horizon)
    )
    _write_rows(path, header, rows)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    return obj


def write_json(path, payload: dict) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(payload), indent=2) + "\n")


def slug(name: str) -> str:
    s = re.sub(r"[^A-Za-z0-9]+", "_", name).strip("_").lower()
    return s or "strategy"
