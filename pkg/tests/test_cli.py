import json
import textwrap

import numpy as np
import pytest

from rsportfolio.artifacts import read_policy_csv, read_value_csv, write_policy_csv
from rsportfolio.cli import Experiment, main
from rsportfolio.config import ConfigError, load_config, parse_config

SMALL = textwrap.dedent(
    """
    name = "small"
    gamma = -0.5

    [model]
    kind = "discrete"
    gross_returns = [[1.5, 0.5], [0.6, 1.8]]
    probabilities = [0.5, 0.5]

    [costs]
    buy = [0.1, 0.2]
    sell = [0.2, 0.1]

    [solver]
    grid_step = 0.02
    fixed_iters = 4

    [evaluation]
    horizon = 20
    n_paths = 200
    seed = 3
    path_horizon = 60

    [[evaluation.strategies]]
    name = "Buy-and-hold asset 1"
    kind = "buy_and_hold"
    asset = 0

    [[evaluation.strategies]]
    name = "Half and half"
    kind = "fixed_mix"
    target = [0.5, 0.5]

    [[evaluation.strategies]]
    name = "Risk-sensitive"
    kind = "bellman"
    """
)


@pytest.fixture
def small_cfg(tmp_path):
    p = tmp_path / "small.toml"
    p.write_text(SMALL)
    return p


def test_bundled_configs_load():
    c1 = load_config("example1")
    assert c1.gamma == -0.5 and c1.solver.fixed_iters == 8 and c1.solver.grid_step == 0.005
    c2 = load_config("example2")
    assert c2.gamma == -5.0 and c2.solver.fixed_iters == 5 and c2.d == 3
    Experiment.from_config(c1)
    Experiment.from_config(c2)


@pytest.mark.parametrize(
    "edit, field",
    [
        (lambda s: s.replace("[costs]\nbuy = [0.1, 0.2]\nsell = [0.2, 0.1]\n", ""), "costs"),
        (lambda s: s.replace("grid_step = 0.02", "grid_step = 0.02\ncolour = 1"), "solver.colour"),
        (lambda s: s.replace('kind = "discrete"', 'kind = "levy"'), "model.kind"),
        (lambda s: s.replace("probabilities = [0.5, 0.5]", "probabilities = [0.5]"), "model.probabilities"),
        (lambda s: s.replace("asset = 0", "asset = 7"), "evaluation.strategies[0].asset"),
        (lambda s: s.replace("fixed_iters = 4", "fixed_iters = 0"), "solver.fixed_iters"),
        (lambda s: s.replace("fixed_iters = 4", "fixed_iters = true"), "solver.fixed_iters"),
    ],
)
def test_config_errors_name_the_field(edit, field):
    with pytest.raises(ConfigError) as info:
        parse_config(edit(SMALL))
    assert info.value.field == field
    assert field in str(info.value)


def test_config_error_reports_line():
    with pytest.raises(ConfigError) as info:
        parse_config(SMALL.replace("grid_step = 0.02", "grid_step = 0.02\ncolour = 1"))
    lines = SMALL.replace("grid_step = 0.02", "grid_step = 0.02\ncolour = 1").splitlines()
    assert lines[info.value.line - 1].startswith("colour")


def test_model_validation_surfaces_as_config_error():
    bad = SMALL.replace("probabilities = [0.5, 0.5]", "probabilities = [0.5, 0.7]")
    with pytest.raises(ConfigError):
        Experiment.from_config(parse_config(bad))
    bad_step = SMALL.replace("grid_step = 0.02", "grid_step = 0.03")
    with pytest.raises(ConfigError):
        Experiment.from_config(parse_config(bad_step))


def test_solve_writes_artifacts_and_round_trips(tmp_path, small_cfg, capsys):
    out = tmp_path / "out"
    assert main(["solve", "--config", str(small_cfg), "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["iterations"] == 4 and report["grid_points"] == 51
    assert report["config"]["solver"]["fixed_iters"] == 4
    assert report["config"]["solver"]["tol"] == 1e-6  # defaults echoed too
    pol = read_policy_csv(out / "policy.csv")
    rep = Experiment.from_config(parse_config(SMALL)).solve()
    np.testing.assert_array_equal(pol.targets, rep.policy.targets)
    np.testing.assert_array_equal(read_value_csv(out / "value.csv").values, rep.value.values)


def test_solve_non_convergence_exit_code(tmp_path):
    p = tmp_path / "short.toml"
    p.write_text(SMALL.replace("fixed_iters = 4", "max_iter = 3"))
    code = main(["solve", "--config", str(p), "--out", str(tmp_path), "--tol", "1e-12"])
    assert code == 3
    assert (tmp_path / "report.json").exists()


def test_fixed_iters_flag(tmp_path, small_cfg):
    assert main(["solve", "--config", str(small_cfg), "--out", str(tmp_path), "--fixed-iters", "2"]) == 0
    assert json.loads((tmp_path / "report.json").read_text())["iterations"] == 2


def test_config_error_exit_code(tmp_path, capsys):
    p = tmp_path / "bad.toml"
    p.write_text(SMALL.replace("[costs]\nbuy = [0.1, 0.2]\nsell = [0.2, 0.1]\n", ""))
    assert main(["solve", "--config", str(p), "--out", str(tmp_path)]) == 2
    assert "costs" in capsys.readouterr().err


def test_missing_config_is_io_error(tmp_path):
    assert main(["solve", "--config", str(tmp_path / "nope.toml"), "--out", str(tmp_path)]) == 4


def test_evaluate_and_determinism(tmp_path, small_cfg):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["evaluate", "--config", str(small_cfg), "--out", str(a)]) == 0
    assert main(["evaluate", "--config", str(small_cfg), "--out", str(b), "--threads", "2"]) == 0
    assert (a / "metrics.csv").read_text() == (b / "metrics.csv").read_text()
    rows = (a / "metrics.csv").read_text().splitlines()
    assert rows[0].startswith("strategy,mean,std,taylor,entropy")
    assert len(rows) == 4
    assert "Risk-sensitive" in (a / "metrics.txt").read_text()


def test_evaluate_empty_strategy_list(tmp_path):
    text = SMALL.split("[[evaluation.strategies]]")[0]
    p = tmp_path / "empty.toml"
    p.write_text(text)
    assert main(["evaluate", "--config", str(p), "--out", str(tmp_path)]) == 2


def test_evaluate_with_policy_file(tmp_path, small_cfg):
    out = tmp_path / "solve"
    main(["solve", "--config", str(small_cfg), "--out", str(out)])
    assert main(["evaluate", "--config", str(small_cfg), "--out", str(tmp_path / "e"),
                 "--policy", str(out / "policy.csv")]) == 0


def test_malformed_policy_reports_row(tmp_path, small_cfg, capsys):
    out = tmp_path / "solve"
    main(["solve", "--config", str(small_cfg), "--out", str(out)])
    lines = (out / "policy.csv").read_text().splitlines()
    lines[5] = "0.1,0.9,abc,0.5"
    bad = tmp_path / "bad.csv"
    bad.write_text("\n".join(lines) + "\n")
    code = main(["evaluate", "--config", str(small_cfg), "--out", str(tmp_path), "--policy", str(bad)])
    assert code == 4
    assert "row 6" in capsys.readouterr().err


def test_policy_csv_round_trip_exact(tmp_path):
    from rsportfolio.geometry import Policy, build_grid

    g = build_grid(3, 0.1)
    tg = np.random.default_rng(0).dirichlet(np.ones(3), len(g))
    write_policy_csv(tmp_path / "p.csv", Policy(g, tg))
    np.testing.assert_array_equal(read_policy_csv(tmp_path / "p.csv").targets, tg)


def test_simulate_common_path(tmp_path, small_cfg):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", "--config", str(small_cfg), "--out", str(a)]) == 0
    assert main(["simulate", "--config", str(small_cfg), "--out", str(b)]) == 0
    files = sorted(p.name for p in a.glob("path_*.csv"))
    assert files == ["path_buy_and_hold_asset_1.csv", "path_half_and_half.csv", "path_risk_sensitive.csv"]
    gross = []
    for name in files:
        assert (a / name).read_text() == (b / name).read_text()
        data = np.genfromtxt(a / name, delimiter=",", names=True)
        assert len(data) == 60
        gross.append(np.column_stack([data["gross_1"], data["gross_2"]]))
    for g in gross[1:]:
        np.testing.assert_array_equal(g, gross[0])


def test_simulate_zero_horizon(tmp_path, small_cfg):
    assert main(["simulate", "--config", str(small_cfg), "--out", str(tmp_path), "--horizon", "0"]) == 2


def test_region_and_markowitz(tmp_path, small_cfg):
    out = tmp_path / "solve"
    main(["solve", "--config", str(small_cfg), "--out", str(out)])
    assert main(["region", "--policy", str(out / "policy.csv"), "--out", str(tmp_path)]) == 0
    region = json.loads((tmp_path / "region.json").read_text())
    lo, hi = region["interval"]
    assert 0 < lo < hi < 1
    assert main(["region", "--policy", str(out / "policy.csv"), "--out", str(tmp_path), "--eta", "0"]) == 2
    assert main(["markowitz", "--config", "example2", "--out", str(tmp_path)]) == 0
    w = json.loads((tmp_path / "markowitz.json").read_text())["weights"]
    np.testing.assert_allclose(w, [0.37054, 0.40179, 0.22768], atol=1e-5)
    assert main(["markowitz", "--config", str(small_cfg), "--out", str(tmp_path)]) == 2
