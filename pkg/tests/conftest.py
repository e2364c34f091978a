import math

import numpy as np
import pytest

from barron_flow.cli.app import BarronFlowApp
from barron_flow.core.barron_space import BoundaryCondition, TrigExpansion
from barron_flow.core.config import OUTPUT_DIR_ENV, ConfigManager
from barron_flow.core.elliptic_problem import EllipticProblem
from barron_flow.core.problems import builtin_problem


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow property sweeps")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def single_mode():
    """-u'' + u = (1 + pi^2) sin(pi x), exact solution sin(pi x)."""
    return builtin_problem("single_mode_d1")


@pytest.fixture
def exact_single_mode():
    return TrigExpansion.basis("s", (1,))


@pytest.fixture
def single_mode_h1():
    return math.sqrt((1.0 + math.pi**2) / 2.0)


@pytest.fixture
def zero_problem():
    return EllipticProblem.isotropic(TrigExpansion.zero(1), BoundaryCondition.DIRICHLET, name="zero")


@pytest.fixture
def app(tmp_path, monkeypatch):
    monkeypatch.delenv(OUTPUT_DIR_ENV, raising=False)
    return BarronFlowApp(ConfigManager(config_dir=tmp_path / "config"))
