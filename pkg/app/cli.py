"""
Command line for generating, evaluating and comparing mixture-process choice designs.

    python run.py generate --config configs/cocktail_i.json
    python run.py evaluate designs/cocktail_i.csv --config configs/cocktail_i.json
    python run.py fds designs/cocktail_d.csv designs/cocktail_i.csv --config configs/cocktail_i.json
    python run.py compare designs/cocktail_d.csv designs/cocktail_i.csv --config configs/cocktail_i.json
    python run.py serve
"""

import argparse
import logging
import math
import os
import sys
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

from dotenv import load_dotenv

from app.models.design_models import EvaluateResponse, RunConfig, RunReport
from app.services.config import EXIT_INPUT_ERROR, EXIT_NUMERICAL_FAILURE, EXIT_OK
from app.services.design_io import (
    load_run_config,
    read_design_csv,
    render_fds_svg,
    write_comparison_csv,
    write_design_csv,
    write_fds_csv,
    write_report_json,
    write_true_proportions_csv,
)
from app.services.design_model import Design, ModelSpec
from app.services.errors import ConfigError, MixChoiceError
from app.services.evaluation import compare_designs, fds_curve
from app.services.optimality import CriterionKind, bayesian_criterion, moments_matrix
from app.services.optimizer import coordinate_exchange

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def cmd_generate(config: RunConfig) -> int:
    spec = ModelSpec(config.problem.q, config.problem.r)
    draws, bayesian = config.prior.run_draws(config.bayesian)
    kind = config.criterion
    W = moments_matrix(spec) if kind is CriterionKind.I else None

    result = coordinate_exchange(
        spec, config.problem.S, config.problem.J, draws, kind, config.optimizer, W, bayesian=bayesian
    )

    outputs = config.outputs
    Path(outputs.design_csv).parent.mkdir(parents=True, exist_ok=True)
    write_design_csv(result.best_design, outputs.design_csv)
    # the reported value is that of the file as written, so evaluate reproduces it
    written = read_design_csv(outputs.design_csv, spec)
    value = bayesian_criterion(spec, written, draws, kind, W, bayesian=bayesian)

    if config.ingredients is not None and outputs.true_proportions_csv:
        write_true_proportions_csv(
            written, config.ingredients.bounds(), outputs.true_proportions_csv, config.ingredients.names
        )

    report = RunReport.from_optimization(result, kind, bayesian, draws.shape[0], value.value)
    Path(outputs.report_json).parent.mkdir(parents=True, exist_ok=True)
    write_report_json(report, outputs.report_json)
    logger.info(f"Generated {report.criterion} design: value {report.value:.10g}")
    return EXIT_OK


def cmd_evaluate(design_path: str, config: RunConfig) -> int:
    spec = ModelSpec(config.problem.q, config.problem.r)
    design = read_design_csv(design_path, spec)
    draws, bayesian = config.prior.run_draws(config.bayesian)
    d = bayesian_criterion(spec, design, draws, CriterionKind.D, bayesian=bayesian)
    i = bayesian_criterion(spec, design, draws, CriterionKind.I, moments_matrix(spec), bayesian=bayesian)
    response = EvaluateResponse(d_value=d.value, i_value=i.value, bayesian=bayesian, draws=draws.shape[0])
    print(response.model_dump_json())
    if d.is_singular or i.is_singular:
        logger.error(f"{design_path}: information matrix is singular")
        return EXIT_NUMERICAL_FAILURE
    return EXIT_OK


def _load_designs(paths: Sequence[str], spec: ModelSpec) -> List[Tuple[str, Design]]:
    return [(Path(path).stem, read_design_csv(path, spec)) for path in paths]


def fds_output_paths(fds_csv: str, design_names: Sequence[str]) -> List[Path]:
    """One design writes fds_csv itself; several write <stem>_<design>.csv next to it."""
    target = Path(fds_csv)
    if len(design_names) == 1:
        return [target]
    return [target.with_name(f"{target.stem}_{name}{target.suffix or '.csv'}") for name in design_names]


def cmd_fds(design_paths: Sequence[str], config: RunConfig) -> int:
    outputs = config.outputs
    if not outputs.fds_csv:
        raise ConfigError("the fds command needs outputs.fds_csv in the run config")
    spec = ModelSpec(config.problem.q, config.problem.r)
    designs = _load_designs(design_paths, spec)
    draws, _ = config.prior.run_draws(config.bayesian)

    curves = [(name, fds_curve(spec, design, draws, config.fds.M, config.fds.seed)) for name, design in designs]
    paths = fds_output_paths(outputs.fds_csv, [name for name, _ in designs])
    paths[0].parent.mkdir(parents=True, exist_ok=True)
    for (_, curve), path in zip(curves, paths):
        write_fds_csv(curve, path)
    svg_path = outputs.fds_svg or str(Path(outputs.fds_csv).with_suffix(".svg"))
    render_fds_svg(curves, svg_path)
    return EXIT_OK


def cmd_compare(design_paths: Sequence[str], config: RunConfig) -> int:
    outputs = config.outputs
    if not outputs.comparison_csv:
        raise ConfigError("the compare command needs outputs.comparison_csv in the run config")
    spec = ModelSpec(config.problem.q, config.problem.r)
    designs = _load_designs(design_paths, spec)
    draws, _ = config.prior.run_draws(config.bayesian)
    rows = compare_designs(spec, designs, draws, config.fds.M, config.fds.seed)
    Path(outputs.comparison_csv).parent.mkdir(parents=True, exist_ok=True)
    write_comparison_csv(rows, outputs.comparison_csv)
    if any(math.isinf(row.d_value) or math.isinf(row.i_value) for row in rows):
        return EXIT_NUMERICAL_FAILURE
    return EXIT_OK


def cmd_serve() -> int:
    import uvicorn

    host = os.getenv("HOST", "127.0.0.1")
    port = int(os.getenv("PORT", 8000))
    reload_enabled = os.getenv("ENVIRONMENT", "development").lower() == "development"
    logger.info(f"Starting design server on {host}:{port}")
    uvicorn.run("app.main:app", host=host, port=port, reload=reload_enabled, log_level="info")
    return EXIT_OK


def _env_workers() -> Optional[int]:
    value = os.getenv("MIXCHOICE_WORKERS")
    if not value:
        return None
    try:
        workers = int(value)
    except ValueError:
        workers = 0
    if workers < 1:
        raise ConfigError(f"MIXCHOICE_WORKERS must be a positive integer, got {value!r}")
    return workers


def _add_run_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="JSON run config")
    parser.add_argument("--seed", type=int, default=None, help="Override optimizer.seed")
    parser.add_argument("--starts", type=int, default=None, help="Override optimizer.n_starts")
    parser.add_argument("--criterion", choices=[k.value for k in CriterionKind], default=None)
    parser.add_argument(
        "--workers",
        type=int,
        default=None,
        help="Threads for multi-start runs (CLI > env:MIXCHOICE_WORKERS > config)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mixchoice", description="Bayesian D- and I-optimal choice designs for mixtures with process variables"
    )
    commands = parser.add_subparsers(dest="command", required=True)

    _add_run_options(commands.add_parser("generate", help="Optimize a design and write it with its report"))

    evaluate = commands.add_parser("evaluate", help="Print the D- and I-value of a design as JSON")
    evaluate.add_argument("design", help="Design CSV")
    _add_run_options(evaluate)

    fds = commands.add_parser("fds", help="Fraction-of-design-space curves and plot")
    fds.add_argument("designs", nargs="+", help="Design CSV(s)")
    _add_run_options(fds)

    compare = commands.add_parser("compare", help="D-, I-value and FDS summary of several designs")
    compare.add_argument("designs", nargs="+", help="Design CSVs")
    _add_run_options(compare)

    commands.add_parser("serve", help="Start the HTTP API")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    load_dotenv()
    logging.basicConfig(level=os.getenv("LOG_LEVEL", "INFO").upper(), format=LOG_FORMAT)
    args = build_parser().parse_args(argv)

    if args.command == "serve":
        return cmd_serve()

    try:
        overrides = {
            "seed": args.seed,
            "n_starts": args.starts,
            "criterion": args.criterion,
            "workers": args.workers or _env_workers(),
        }
        config = load_run_config(args.config, overrides)
        if args.command == "generate":
            return cmd_generate(config)
        if args.command == "evaluate":
            return cmd_evaluate(args.design, config)
        if args.command == "fds":
            return cmd_fds(args.designs, config)
        return cmd_compare(args.designs, config)
    except MixChoiceError as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        logger.error(f"{args.command} failed: {e}", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())
