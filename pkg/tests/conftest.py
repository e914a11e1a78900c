import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

from rsportfolio.costs import CostSchedule  # noqa: E402
from rsportfolio.geometry import build_grid  # noqa: E402
from rsportfolio.market import (  # noqa: E402
    DiscreteReturnModel,
    GaussianReturnModel,
    scenarios_from_discrete,
)

settings.register_profile("default", deadline=None)
settings.load_profile("default")

EX1_GROSS = [[1.5, 0.5], [0.6, 1.8]]
EX2_MEAN = 0.001 * np.array([2.5, 1.5, 2.0])
EX2_COV = 0.0008 * np.array([[3.0, -1.0, -0.5], [-1.0, 1.5, 0.5], [-0.5, 0.5, 2.0]])


@pytest.fixture(scope="session")
def ex1_model():
    return DiscreteReturnModel.from_gross(EX1_GROSS, [0.5, 0.5])


@pytest.fixture(scope="session")
def ex1_scenarios(ex1_model):
    return scenarios_from_discrete(ex1_model)


@pytest.fixture(scope="session")
def ex1_costs():
    return CostSchedule([0.1, 0.2], [0.2, 0.1])


@pytest.fixture(scope="session")
def ex2_model():
    return GaussianReturnModel(EX2_MEAN, EX2_COV)


@pytest.fixture(scope="session")
def ex2_costs():
    return CostSchedule(0.004 * np.array([2.0, 1.6, 1.0]), 0.004 * np.array([1.0, 1.6, 2.0]))


@pytest.fixture(scope="session")
def coarse_grid2():
    return build_grid(2, 0.02)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
