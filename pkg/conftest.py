import math

import pytest

from levy_model import LevyModel


def pytest_addoption(parser):
    parser.addoption("--runslow", action = "store_true", default = False, help = "run slow Monte Carlo tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason = "needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


def _exp_model(gamma: float, sigma: float, beta: float, mu: float) -> LevyModel:
    return LevyModel.model_validate(
        {"gamma": gamma, "sigma": sigma, "jumps": {"rate": beta, "claim": {"type": "exp", "rate": mu}}}
    )


@pytest.fixture
def standard_bm() -> LevyModel:
    return LevyModel(gamma = 0.0, sigma = 1.0)


@pytest.fixture
def bm_drift() -> LevyModel:
    # psi(theta) = theta + theta^2, Phi(2) = 1
    return LevyModel(gamma = 1.0, sigma = math.sqrt(2.0))


@pytest.fixture
def cramer_lundberg() -> LevyModel:
    # psi'(0+) = 1/2, W(x) = 2 - exp(-x), Phi(1) = sqrt(2)
    return _exp_model(1.0, 0.0, 1.0, 2.0)


@pytest.fixture
def jump_diffusion() -> LevyModel:
    return _exp_model(1.0, 1.0, 1.0, 2.0)


@pytest.fixture
def hyperexp() -> LevyModel:
    return LevyModel.model_validate(
        {"gamma": 2.0, "sigma": 0.5,
         "jumps": {"rate": 1.5, "claim": {"type": "hyperexp", "weights": [0.4, 0.6], "rates": [1.0, 3.0]}}}
    )


@pytest.fixture
def erlang() -> LevyModel:
    return LevyModel.model_validate(
        {"gamma": 1.5, "sigma": 0.0, "jumps": {"rate": 1.0, "claim": {"type": "erlang", "shape": 2, "rate": 3.0}}}
    )


@pytest.fixture(params = ["bm_drift", "cramer_lundberg", "jump_diffusion", "hyperexp", "erlang"])
def profit_model(request) -> LevyModel:
    """Every test model satisfying psi'(0+) > 0."""
    return request.getfixturevalue(request.param)
