"""
File formats: run configs, prior files, design CSVs, FDS/comparison tables,
the FDS plot and the run report.
"""

import json
import logging
import re
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from jinja2 import Environment, FileSystemLoader, select_autoescape
from pydantic import ValidationError

from app.models.design_models import DesignRow, PriorFile, RunConfig, RunReport
from app.services.config import CSV_FLOAT_FORMAT, RENORMALIZE_TOL, SIMPLEX_TOL
from app.services.design_model import Design, IngredientBounds, ModelSpec, from_pseudocomponents
from app.services.errors import ConfigError, DesignFormatError
from app.services.evaluation import ComparisonRow, FdsCurve

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

TEMPLATE_DIR = Path(__file__).resolve().parent.parent / "templates"
PLOT_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"]


# Configs

def _read_json(path: Path) -> Dict[str, Any]:
    try:
        return json.loads(path.read_text())
    except FileNotFoundError as e:
        raise ConfigError(f"file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from e


def load_prior_file(path: PathLike) -> PriorFile:
    path = Path(path)
    try:
        return PriorFile.model_validate(_read_json(path))
    except ValidationError as e:
        raise ConfigError(f"{path}: {e}") from e


def load_run_config(path: PathLike, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """
    Read a run config; relative paths resolve against the config's directory.

    Args:
        path: JSON run config
        overrides: Optional scalar overrides: seed, n_starts, criterion, workers

    Returns:
        Validated RunConfig with absolute paths
    """
    path = Path(path)
    data = _read_json(path)
    base = path.resolve().parent

    prior = data.get("prior")
    if isinstance(prior, str):
        prior_path = base / prior
        if not prior_path.is_file():
            raise ConfigError(f"prior file not found: {prior_path}")
        data["prior"] = _read_json(prior_path)

    outputs = data.get("outputs")
    if isinstance(outputs, dict):
        data["outputs"] = {key: str(base / value) if isinstance(value, str) else value for key, value in outputs.items()}

    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key == "criterion":
            data["criterion"] = value
        else:
            data.setdefault("optimizer", {})[key] = value

    try:
        config = RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"{path}: {e}") from e
    logger.info(f"Loaded run config {path.name}: q={config.problem.q}, r={config.problem.r}, S={config.problem.S}")
    return config


# Designs

def design_columns(q: int, r: int) -> List[str]:
    return ["choice_set", "alternative"] + [f"x{i}" for i in range(1, q + 1)] + [f"z{i}" for i in range(1, r + 1)]


def _design_frame(design: Design, value_columns: Sequence[str], values: np.ndarray) -> pd.DataFrame:
    S, J = design.S, design.J
    frame = pd.DataFrame(values.reshape(S * J, -1), columns=list(value_columns))
    frame.insert(0, "alternative", np.tile(np.arange(1, J + 1), S))
    frame.insert(0, "choice_set", np.repeat(np.arange(1, S + 1), J))
    return frame


def write_design_csv(design: Design, path: PathLike) -> None:
    """One row per alternative, values with 12 significant digits."""
    columns = design_columns(design.q, design.r)[2:]
    values = np.concatenate([design.x, design.z], axis=-1)
    frame = _design_frame(design, columns, values)
    frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
    logger.info(f"Wrote {design.S * design.J} design rows to {path}")


def write_true_proportions_csv(
    design: Design, bounds: IngredientBounds, path: PathLike, names: Optional[Sequence[str]] = None
) -> None:
    """Companion CSV with the true ingredient proportions behind the pseudocomponents."""
    names = list(names) if names else [f"a{i}" for i in range(1, design.q + 1)]
    columns = names + [f"z{i}" for i in range(1, design.r + 1)]
    values = np.concatenate([from_pseudocomponents(design.x, bounds), design.z], axis=-1)
    _design_frame(design, columns, values).to_csv(
        path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n"
    )


def _parse_error_line(error: Exception) -> Optional[int]:
    match = re.search(r"line (\d+)", str(error))
    return int(match.group(1)) if match else None


def read_design_csv(path: PathLike, spec: Optional[ModelSpec] = None) -> Design:
    """
    Parse a design CSV written by write_design_csv.

    Raises:
        DesignFormatError: naming the offending file line (the header is line 1)
    """
    path = Path(path)
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except FileNotFoundError as e:
        raise DesignFormatError(f"design file not found: {path}") from e
    except pd.errors.EmptyDataError as e:
        raise DesignFormatError(f"{path} is empty") from e
    except pd.errors.ParserError as e:
        raise DesignFormatError(f"{path}: malformed row", line=_parse_error_line(e)) from e

    columns = list(frame.columns)
    q = sum(1 for c in columns if re.fullmatch(r"x\d+", c))
    r = sum(1 for c in columns if re.fullmatch(r"z\d+", c))
    if columns != design_columns(q, r):
        raise DesignFormatError(f"unexpected header {','.join(columns)}", line=1)
    if spec is not None and (q, r) != (spec.q, spec.r):
        raise DesignFormatError(f"design has q={q}, r={r} but the config has q={spec.q}, r={spec.r}", line=1)
    if frame.empty:
        raise DesignFormatError(f"{path} has no design rows")

    numeric = frame.apply(pd.to_numeric, errors="coerce")
    bad = numeric.isna().any(axis=1)
    if bad.any():
        raise DesignFormatError("non-numeric value", line=int(np.flatnonzero(bad.to_numpy())[0]) + 2)

    x = numeric[[f"x{i}" for i in range(1, q + 1)]].to_numpy(dtype=float)
    z = numeric[[f"z{i}" for i in range(1, r + 1)]].to_numpy(dtype=float).reshape(len(frame), r)
    for row, (xs, zs) in enumerate(zip(x, z)):
        if np.any(xs < -SIMPLEX_TOL) or abs(xs.sum() - 1.0) > RENORMALIZE_TOL or np.any(np.abs(zs) > 1 + SIMPLEX_TOL):
            raise DesignFormatError("point outside the experimental region", line=row + 2)

    sets = numeric["choice_set"].to_numpy()
    alts = numeric["alternative"].to_numpy()
    S, J = int(sets.max()), int(alts.max())
    expected_sets = np.repeat(np.arange(1, S + 1), J)
    expected_alts = np.tile(np.arange(1, J + 1), S)
    if len(frame) != S * J or not (np.array_equal(sets, expected_sets) and np.array_equal(alts, expected_alts)):
        mismatch = next(
            (i for i in range(min(len(frame), S * J)) if sets[i] != expected_sets[i] or alts[i] != expected_alts[i]),
            min(len(frame), S * J),
        )
        raise DesignFormatError("rows must list choice sets 1..S with alternatives 1..J in order", line=mismatch + 2)

    return Design(x.reshape(S, J, q), z.reshape(S, J, r))


def design_rows(design: Design) -> List[DesignRow]:
    return [
        DesignRow(choice_set=s + 1, alternative=j + 1, x=design.x[s, j].tolist(), z=design.z[s, j].tolist())
        for s in range(design.S)
        for j in range(design.J)
    ]


def design_from_rows(rows: Sequence[DesignRow], spec: ModelSpec) -> Design:
    """Assemble a design from rows listing sets 1..S with alternatives 1..J in order."""
    if not rows:
        raise DesignFormatError("no design rows")
    for index, row in enumerate(rows):
        if (len(row.x), len(row.z)) != (spec.q, spec.r):
            raise DesignFormatError(
                f"row has {len(row.x)} proportions and {len(row.z)} settings, expected {spec.q} and {spec.r}",
                line=index + 1,
            )
    S = max(row.choice_set for row in rows)
    J = max(row.alternative for row in rows)
    order = [(row.choice_set, row.alternative) for row in rows]
    expected = [(s, j) for s in range(1, S + 1) for j in range(1, J + 1)]
    if order != expected:
        raise DesignFormatError("rows must list choice sets 1..S with alternatives 1..J in order")
    x = np.array([row.x for row in rows], dtype=float).reshape(S, J, spec.q)
    z = np.array([row.z for row in rows], dtype=float).reshape(S, J, spec.r)
    return Design(x, z)


# Evaluation outputs

def write_fds_csv(curve: FdsCurve, path: PathLike) -> None:
    frame = pd.DataFrame({"fraction": curve.fractions, "avg_pred_var": curve.variances})
    frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
    logger.info(f"Wrote FDS curve ({curve.M} points) to {path}")


def write_comparison_csv(rows: Iterable[ComparisonRow], path: PathLike) -> None:
    frame = pd.DataFrame(
        [(row.design, row.d_value, row.i_value, row.fds_min, row.fds_median, row.fds_max) for row in rows],
        columns=["design", "d_value", "i_value", "fds_min", "fds_median", "fds_max"],
    )
    frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")


def render_fds_svg(curves: Sequence[Tuple[str, FdsCurve]], path: Optional[PathLike] = None, max_points: int = 500) -> str:
    """
    Overlaid FDS plot as a static SVG 1.1 document, one polyline per design.

    Returns:
        The SVG text (also written to path when given)
    """
    width, height = 640, 420
    left, right, top, bottom = 70, 20, 20, 50
    plot_w, plot_h = width - left - right, height - top - bottom
    v_min = min(curve.min for _, curve in curves)
    v_max = max(curve.max for _, curve in curves)
    span = (v_max - v_min) or 1.0

    def sx(fraction: float) -> float:
        return left + fraction * plot_w

    def sy(value: float) -> float:
        return top + plot_h - (value - v_min) / span * plot_h

    series = []
    for index, (name, curve) in enumerate(curves):
        keep = np.unique(np.linspace(0, curve.M - 1, min(max_points, curve.M)).round().astype(int))
        points = " ".join(f"{sx(f):.2f},{sy(v):.2f}" for f, v in zip(curve.fractions[keep], curve.variances[keep]))
        series.append({"name": name, "points": points, "color": PLOT_COLORS[index % len(PLOT_COLORS)]})

    x_ticks = [{"pos": sx(t), "label": f"{t:g}"} for t in (0, 0.25, 0.5, 0.75, 1.0)]
    y_ticks = [{"pos": sy(v), "label": f"{v:.3g}"} for v in np.linspace(v_min, v_max, 5)]

    env = Environment(loader=FileSystemLoader(TEMPLATE_DIR), autoescape=select_autoescape(["svg", "j2"]))
    svg = env.get_template("fds_plot.svg.j2").render(
        width=width, height=height, left=left, top=top, plot_w=plot_w, plot_h=plot_h,
        series=series, x_ticks=x_ticks, y_ticks=y_ticks,
    )
    if path is not None:
        Path(path).write_text(svg)
        logger.info(f"Wrote FDS plot with {len(series)} curve(s) to {path}")
    return svg


def write_report_json(report: RunReport, path: PathLike) -> None:
    Path(path).write_text(report.model_dump_json(indent=2) + "\n")
