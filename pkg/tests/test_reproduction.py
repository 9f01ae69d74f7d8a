"""
Desk-scale reproductions of the cocktail and fish-patty studies.

These run the shipped configs end to end and take tens of minutes;
they only run with --runslow.
"""

import json
from pathlib import Path

import pandas as pd
import pytest

from app.cli import main
from app.services.design_io import load_run_config
from app.services.design_model import ModelSpec
from app.services.evaluation import fds_curve
from app.services.optimality import CriterionKind, bayesian_criterion, moments_matrix
from app.services.optimizer import coordinate_exchange

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"
STARTS = 5


def optimal_design(config_name):
    config = load_run_config(CONFIG_DIR / config_name, {"n_starts": STARTS})
    spec = ModelSpec(config.problem.q, config.problem.r)
    draws, bayesian = config.prior.run_draws(config.bayesian)
    W = moments_matrix(spec) if config.criterion is CriterionKind.I else None
    result = coordinate_exchange(
        spec, config.problem.S, config.problem.J, draws, config.criterion, config.optimizer, W, bayesian=bayesian
    )
    return config, spec, draws, result.best_design


@pytest.mark.slow
def test_cocktail_d_against_i():
    config, spec, draws, d_design = optimal_design("cocktail_d.json")
    _, _, _, i_design = optimal_design("cocktail_i.json")
    W = moments_matrix(spec)

    i_of_d = bayesian_criterion(spec, d_design, draws, CriterionKind.I, W).value
    i_of_i = bayesian_criterion(spec, i_design, draws, CriterionKind.I, W).value
    assert i_of_i < i_of_d
    d_of_d = bayesian_criterion(spec, d_design, draws, CriterionKind.D).value
    d_of_i = bayesian_criterion(spec, i_design, draws, CriterionKind.D).value
    assert d_of_d < d_of_i

    d_median = fds_curve(spec, d_design, draws, config.fds.M, config.fds.seed).median
    i_median = fds_curve(spec, i_design, draws, config.fds.M, config.fds.seed).median
    assert i_median < d_median
    assert d_median == pytest.approx(21.6, rel=0.3)
    assert i_median == pytest.approx(10.9, rel=0.3)


@pytest.mark.slow
@pytest.mark.parametrize("kappa", ["0.5", "30"])
def test_fish_patty_i_optimal_has_lower_median(kappa):
    config, spec, draws, d_design = optimal_design(f"fish_patty_kappa_{kappa}_d.json")
    _, _, _, i_design = optimal_design(f"fish_patty_kappa_{kappa}_i.json")
    assert spec.m == 20
    d_median = fds_curve(spec, d_design, draws, config.fds.M, config.fds.seed).median
    i_median = fds_curve(spec, i_design, draws, config.fds.M, config.fds.seed).median
    assert i_median < d_median


@pytest.mark.slow
@pytest.mark.parametrize(
    "name, rows, columns",
    [
        ("cocktail_i.json", 280, ["x1", "x2", "x3", "z1"]),
        ("fish_patty_kappa_5_d.json", 120, ["x1", "x2", "x3", "z1", "z2", "z3"]),
    ],
)
def test_generate_from_shipped_config(name, rows, columns, tmp_path):
    config = json.loads((CONFIG_DIR / name).read_text())
    config["prior"] = str(CONFIG_DIR / config["prior"])
    config["outputs"] = {"design_csv": "design.csv", "report_json": "report.json"}
    path = tmp_path / name
    path.write_text(json.dumps(config))
    assert main(["generate", "--config", str(path), "--starts", "1"]) == 0
    frame = pd.read_csv(tmp_path / "design.csv")
    assert len(frame) == rows
    assert list(frame.columns) == ["choice_set", "alternative"] + columns
