import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from opennmpc.config import load_config

settings.register_profile("default", max_examples=50, deadline=None)
settings.register_profile("fast", max_examples=10, deadline=None)
settings.register_profile(
    "ci", max_examples=200, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.getenv("HYPOTHESIS_PROFILE", "default"))


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run acceptance-scale tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


# Short closed loop: 8 samples of 1 s, 5-stage horizon, one setpoint step.
SMALL_OVERRIDES = (
    "scenario.tf=8.0",
    "scenario.Ns=5",
    "scenario.setpoints=[[0.0, 300.0], [4.0, 310.0]]",
    "controller.N=5",
    "controller.Nc=2",
    "controller.filter_steps=2",
    "solver.max_iter=30",
    "run.n_sims=3",
)


@pytest.fixture
def default_config():
    return load_config()


@pytest.fixture
def small_config():
    return load_config(overrides=SMALL_OVERRIDES)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(autouse=True)
def _clear_env(monkeypatch):
    for name in ("OPENNMPC_WORKERS", "OPENNMPC_OUT_DIR", "OPENNMPC_SEED"):
        monkeypatch.delenv(name, raising=False)
