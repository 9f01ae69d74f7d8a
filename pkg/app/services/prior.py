"""
Priors over the identified parameter space and their quasi-random draws.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np
from scipy.special import ndtri
from scipy.stats import qmc

from app.services.config import DEFAULT_HALTON_SKIP, HALTON_MAX_DIM, PSD_TOL, SYMMETRY_TOL
from app.services.design_model import param_count
from app.services.errors import InvalidArgumentError, InvalidCovarianceError, UnsupportedDimensionError

logger = logging.getLogger(__name__)


class PriorKind(str, Enum):
    POINT = "point"
    NORMAL = "normal"


def _check_psd(covariance: np.ndarray) -> None:
    if not np.allclose(covariance, covariance.T, atol=SYMMETRY_TOL, rtol=0.0):
        raise InvalidCovarianceError("covariance matrix must be symmetric")
    eigenvalues = np.linalg.eigvalsh(covariance)
    floor = -PSD_TOL * max(float(np.trace(covariance)), 0.0)
    if eigenvalues.size and eigenvalues.min() < floor:
        raise InvalidCovarianceError(f"covariance matrix is not PSD (smallest eigenvalue {eigenvalues.min():.3g})")


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PriorSpec:
    """
    Point estimate or multivariate normal prior on the identified parameters.

    A point prior always has a single draw.
    """

    kind: PriorKind
    mean: np.ndarray
    covariance: Optional[np.ndarray] = None
    draws: int = 1
    skip: int = DEFAULT_HALTON_SKIP

    def __post_init__(self):
        kind = PriorKind(self.kind)
        mean = _frozen(np.atleast_1d(self.mean))
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "mean", mean)
        if kind is PriorKind.POINT:
            if self.draws != 1:
                raise InvalidArgumentError("a point prior has exactly one draw")
            object.__setattr__(self, "covariance", None)
            return
        if self.covariance is None:
            raise InvalidArgumentError("a normal prior needs a covariance matrix")
        covariance = _frozen(self.covariance)
        if covariance.shape != (mean.size, mean.size):
            raise InvalidArgumentError(f"covariance shape {covariance.shape} does not match mean length {mean.size}")
        _check_psd(covariance)
        if self.draws < 1:
            raise InvalidArgumentError(f"need at least one draw, got {self.draws}")
        if self.skip < 0:
            raise InvalidArgumentError(f"Halton skip must be >= 0, got {self.skip}")
        object.__setattr__(self, "covariance", covariance)

    @property
    def m(self) -> int:
        return self.mean.size


@dataclass(frozen=True, eq=False)
class UnidentifiedPrior:
    """
    Normal prior including all q first-order mixture coefficients.

    The coefficient order is the identified order with gamma_q inserted right
    after gamma_{q-1}.
    """

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", _frozen(np.atleast_1d(self.mean)))
        object.__setattr__(self, "covariance", _frozen(self.covariance))
        n = self.mean.size
        if self.covariance.shape != (n, n):
            raise InvalidArgumentError(f"covariance shape {self.covariance.shape} does not match mean length {n}")


def _process_count(q: int, m: int) -> int:
    r = 0
    while param_count(q, r) < m:
        r += 1
    if param_count(q, r) != m:
        raise InvalidArgumentError(f"no process variable count gives {m} identified parameters for q={q}")
    return r


def identification_matrix(q: int, r: int) -> np.ndarray:
    """
    Linear map T from the m+1 unidentified to the m identified coefficients.

    gamma_i* = gamma_i - gamma_q for i < q; gamma_q is dropped; everything
    else passes through unchanged.
    """
    m = param_count(q, r)
    T = np.zeros((m, m + 1))
    for i in range(q - 1):
        T[i, i] = 1.0
        T[i, q - 1] = -1.0
    for i in range(q - 1, m):
        T[i, i + 1] = 1.0
    return T


def identify_prior(
    u: UnidentifiedPrior, q: int, draws: int = 1, skip: int = DEFAULT_HALTON_SKIP
) -> PriorSpec:
    """
    Transform an unidentified normal prior to the identified space.

    Args:
        u: Prior over the m+1 unidentified coefficients
        q: Number of ingredients; r follows from the prior's dimension
        draws: Halton draw count for the resulting prior
        skip: Halton skip for the resulting prior

    Returns:
        Normal PriorSpec with mean T mean and covariance T cov T^T
    """
    r = _process_count(q, u.mean.size - 1)
    T = identification_matrix(q, r)
    mean = T @ u.mean
    covariance = T @ u.covariance @ T.T
    logger.info(f"Identified prior: {u.mean.size} -> {mean.size} coefficients (q={q}, r={r})")
    return PriorSpec(PriorKind.NORMAL, mean, 0.5 * (covariance + covariance.T), draws=draws, skip=skip)


def halton_sequence(dim: int, R: int, skip: int = DEFAULT_HALTON_SKIP) -> np.ndarray:
    """
    Unscrambled Halton points with prime bases 2, 3, 5, ...

    Args:
        dim: Number of columns (at most 50)
        R: Number of rows
        skip: Number of leading points to drop after the origin

    Returns:
        R x dim array holding Halton points skip+1 .. skip+R
    """
    if dim < 1 or R < 1:
        raise InvalidArgumentError(f"need dim >= 1 and R >= 1, got dim={dim}, R={R}")
    if dim > HALTON_MAX_DIM:
        raise UnsupportedDimensionError(f"Halton draws support at most {HALTON_MAX_DIM} dimensions, got {dim}")
    if skip < 0:
        raise InvalidArgumentError(f"skip must be >= 0, got {skip}")
    sampler = qmc.Halton(d=dim, scramble=False)
    # the unscrambled sequence starts at the origin, which has no normal quantile
    sampler.fast_forward(skip + 1)
    return sampler.random(R)


def _covariance_root(covariance: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(covariance)
    except np.linalg.LinAlgError:
        eigenvalues, eigenvectors = np.linalg.eigh(covariance)
        return eigenvectors * np.sqrt(np.clip(eigenvalues, 0.0, None))


def normal_draws(prior: PriorSpec, skip: Optional[int] = None) -> np.ndarray:
    """
    Deterministic draws mean + C ndtri(h) from a normal prior.

    C is the Cholesky factor of the covariance, or an eigen-root when the
    covariance is only semidefinite.

    Returns:
        Array of shape (R, m)
    """
    if prior.kind is not PriorKind.NORMAL:
        raise InvalidArgumentError("normal draws need a normal prior")
    skip = prior.skip if skip is None else skip
    h = halton_sequence(prior.m, prior.draws, skip)
    root = _covariance_root(prior.covariance)
    return prior.mean + ndtri(h) @ root.T


def prior_draws(prior: PriorSpec) -> np.ndarray:
    """All parameter vectors a criterion should average over, shape (R, m)."""
    if prior.kind is PriorKind.POINT:
        return prior.mean[None, :].copy()
    return normal_draws(prior)
