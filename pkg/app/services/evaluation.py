"""
Fraction-of-design-space curves and head-to-head design comparison.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import solve_triangular

from app.services.config import DEFAULT_FDS_POINTS, DEFAULT_FDS_SEED, MIN_FDS_POINTS
from app.services.design_model import Design, DesignPoint, ModelSpec, expand_points
from app.services.errors import InvalidArgumentError, SingularInformationError
from app.services.mnl_core import cholesky_stack, design_matrix, information_stack
from app.services.optimality import CriterionKind, MomentsMatrix, bayesian_criterion, moments_matrix

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class RegionSample:
    """M points drawn uniformly from simplex x [-1, 1]^r."""

    x: np.ndarray
    z: np.ndarray

    def __len__(self) -> int:
        return self.x.shape[0]

    def point(self, k: int) -> DesignPoint:
        return DesignPoint(self.x[k], self.z[k])


@dataclass(frozen=True, eq=False)
class FdsCurve:
    """
    Sorted prediction variances against the fraction of the region below them.
    """

    fractions: np.ndarray
    variances: np.ndarray
    M: int
    seed: int

    @property
    def min(self) -> float:
        return float(self.variances[0])

    @property
    def max(self) -> float:
        return float(self.variances[-1])

    @property
    def median(self) -> float:
        return float(np.median(self.variances))

    def value_at(self, fraction: float) -> float:
        """Smallest variance whose fraction reaches the given fraction."""
        if not 0 < fraction <= 1:
            raise InvalidArgumentError(f"fraction must be in (0, 1], got {fraction}")
        index = int(np.searchsorted(self.fractions, fraction - 1e-12))
        return float(self.variances[min(index, self.M - 1)])


@dataclass(frozen=True)
class ComparisonRow:
    design: str
    d_value: float
    i_value: float
    fds_min: float
    fds_median: float
    fds_max: float


def sample_region(spec: ModelSpec, M: int, seed: int) -> RegionSample:
    """Uniform points on the simplex (exponential spacings) and the process cube."""
    if M < 1:
        raise InvalidArgumentError(f"need at least one sample, got M={M}")
    rng = np.random.default_rng(seed)
    spacings = rng.standard_exponential((M, spec.q))
    x = spacings / spacings.sum(axis=1, keepdims=True)
    z = rng.uniform(-1.0, 1.0, (M, spec.r))
    return RegionSample(x, z)


def averaged_prediction_variances(
    spec: ModelSpec, design: Design, draws: np.ndarray, x: np.ndarray, z: np.ndarray
) -> np.ndarray:
    """
    Prediction variance f^T I(theta)^{-1} f at every point, averaged over draws.

    Raises:
        SingularInformationError: naming the first draw whose information is singular
    """
    draws = np.atleast_2d(np.asarray(draws, dtype=float))
    infos = information_stack(design_matrix(spec, design), draws)
    F = expand_points(spec, x, z)
    total = np.zeros(F.shape[0])
    for index, info in enumerate(infos):
        try:
            factor = cholesky_stack(info)
        except SingularInformationError as e:
            raise SingularInformationError(draw_index=index) from e
        solved = solve_triangular(factor, F.T, lower=True)
        total += np.sum(solved * solved, axis=0)
    return total / draws.shape[0]


def region_mean_variance(
    spec: ModelSpec, design: Design, draws: np.ndarray, M: int, seed: int = DEFAULT_FDS_SEED
) -> float:
    """Mean averaged prediction variance over M uniform region points; times vol(region) it approximates the I-value."""
    sample = sample_region(spec, M, seed)
    return float(np.mean(averaged_prediction_variances(spec, design, draws, sample.x, sample.z)))


def fds_curve(
    spec: ModelSpec,
    design: Design,
    draws: np.ndarray,
    M: int = DEFAULT_FDS_POINTS,
    seed: int = DEFAULT_FDS_SEED,
) -> FdsCurve:
    """
    Fraction-of-design-space curve of a design.

    Variances are averaged over the draws at each region point first and
    sorted afterwards.
    """
    if M < MIN_FDS_POINTS:
        raise InvalidArgumentError(f"an FDS curve needs at least {MIN_FDS_POINTS} points, got M={M}")
    sample = sample_region(spec, M, seed)
    variances = averaged_prediction_variances(spec, design, draws, sample.x, sample.z)
    variances = np.sort(variances, kind="stable")
    fractions = np.arange(1, M + 1) / M
    logger.debug(f"FDS curve over {M} points: median {np.median(variances):.6g}")
    return FdsCurve(fractions, variances, M, seed)


def compare_designs(
    spec: ModelSpec,
    designs: Sequence[Tuple[str, Design]],
    draws: np.ndarray,
    M: int = DEFAULT_FDS_POINTS,
    seed: int = DEFAULT_FDS_SEED,
    W: Optional[MomentsMatrix] = None,
) -> List[ComparisonRow]:
    """
    D-value, I-value and FDS summary of several designs under one prior.

    Every design is evaluated on the same draws and the same region sample.
    """
    names = [name for name, _ in designs]
    duplicates = sorted({name for name in names if names.count(name) > 1})
    if duplicates:
        raise InvalidArgumentError(f"duplicate design names: {', '.join(duplicates)}")
    W = W or moments_matrix(spec)
    bayesian = np.atleast_2d(draws).shape[0] > 1
    rows = []
    for name, design in designs:
        d = bayesian_criterion(spec, design, draws, CriterionKind.D, bayesian=bayesian)
        i = bayesian_criterion(spec, design, draws, CriterionKind.I, W, bayesian=bayesian)
        curve = fds_curve(spec, design, draws, M, seed)
        rows.append(ComparisonRow(name, d.value, i.value, curve.min, curve.median, curve.max))
        logger.info(f"{name}: D={d.value:.6g}, I={i.value:.6g}, median FDS={curve.median:.6g}")
    return rows
