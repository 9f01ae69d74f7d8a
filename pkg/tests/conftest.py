"""Shared fixtures for the design test suite."""

import json

import numpy as np
import pytest

from app.services.design_model import Design, ModelSpec


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow reproduction tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def spec_q3():
    return ModelSpec(3, 0)


@pytest.fixture
def spec_q3r1():
    return ModelSpec(3, 1)


@pytest.fixture
def small_design_q3r1():
    """Four sets of two alternatives; too few sets to identify the q=3, r=1 model."""
    x = np.array([
        [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
        [[0.0, 0.0, 1.0], [0.5, 0.5, 0.0]],
        [[0.5, 0.0, 0.5], [0.0, 0.5, 0.5]],
        [[1 / 3, 1 / 3, 1 / 3], [0.2, 0.3, 0.5]],
    ])
    z = np.array([
        [[-1.0], [1.0]],
        [[0.0], [-0.5]],
        [[1.0], [0.3]],
        [[-0.2], [-1.0]],
    ])
    return Design(x, z)


@pytest.fixture
def random_design_q3r1():
    """Twelve sets of random mixtures and settings; information is non-singular."""
    rng = np.random.default_rng(7)
    spacings = rng.standard_exponential((12, 2, 3))
    x = spacings / spacings.sum(axis=-1, keepdims=True)
    z = rng.uniform(-1, 1, (12, 2, 1))
    return Design(x, z)


SMALL_PRIOR = {
    "q": 3,
    "r": 1,
    "kind": "normal",
    "mean": [1.0, 0.5, 0.2, 0.3, 0.1, 0.4, 0.2, 0.1, 0.0],
    "covariance": {"diag": [0.25] * 9},
    "draws": 4,
}


@pytest.fixture
def small_prior():
    return dict(SMALL_PRIOR)


@pytest.fixture
def run_config_path(tmp_path):
    """Factory writing a small q=3, r=1 run config (and its prior) under tmp_path."""

    def write(criterion="d", S=12, **sections):
        (tmp_path / "priors").mkdir(exist_ok=True)
        (tmp_path / "priors" / "small.json").write_text(json.dumps(SMALL_PRIOR))
        config = {
            "problem": {"q": 3, "r": 1, "S": S, "J": 2},
            "prior": "priors/small.json",
            "criterion": criterion,
            "optimizer": {"n_starts": 2, "max_passes": 2, "seed": 11},
            "outputs": {
                "design_csv": f"out/design_{criterion}.csv",
                "report_json": f"out/design_{criterion}.json",
                "fds_csv": "out/fds.csv",
                "comparison_csv": "out/compare.csv",
            },
            "fds": {"M": 200, "seed": 5},
        }
        config.update(sections)
        path = tmp_path / f"run_{criterion}.json"
        path.write_text(json.dumps(config))
        return path

    return write
