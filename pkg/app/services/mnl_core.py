"""
Multinomial logit choice probabilities and design information matrices.
"""

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import cho_solve
from scipy.special import softmax

from app.services.config import SINGULAR_RCOND, SYMMETRY_TOL
from app.services.design_model import Design, DesignPoint, ModelSpec, expand_points, model_expand
from app.services.errors import InvalidArgumentError, SingularInformationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class InfoMatrix:
    """Symmetric m x m information matrix of a design at one parameter vector."""

    entries: np.ndarray

    def __post_init__(self):
        entries = np.array(self.entries, dtype=float)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise InvalidArgumentError(f"information matrix must be square, got shape {entries.shape}")
        scale = max(1.0, float(np.abs(entries).max(initial=0.0)))
        if not np.allclose(entries, entries.T, atol=SYMMETRY_TOL * scale, rtol=0.0):
            raise InvalidArgumentError("information matrix must be symmetric")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @property
    def m(self) -> int:
        return self.entries.shape[0]


def _check_theta(spec: ModelSpec, theta: np.ndarray) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.shape[-1] != spec.m:
        raise InvalidArgumentError(f"parameter vector has length {theta.shape[-1]}, model needs m={spec.m}")
    return theta


def design_matrix(spec: ModelSpec, design: Design) -> np.ndarray:
    """Stacked model expansions X with shape (S, J, m)."""
    design.check_spec(spec)
    return expand_points(spec, design.x, design.z)


def choice_probabilities(spec: ModelSpec, theta: np.ndarray, choice_set: Sequence[DesignPoint]) -> np.ndarray:
    """
    Logit probabilities of the alternatives in one choice set.

    Args:
        spec: Model specification
        theta: Identified parameter vector of length m
        choice_set: The J alternatives

    Returns:
        Vector of J probabilities summing to one
    """
    theta = _check_theta(spec, theta)
    X = np.stack([model_expand(spec, p) for p in choice_set])
    # softmax subtracts the maximum utility before exponentiating
    return softmax(X @ theta)


def set_information(X: np.ndarray, thetas: np.ndarray) -> np.ndarray:
    """
    Per-draw, per-set information blocks X_s^T (P_s - p_s p_s^T) X_s.

    Args:
        X: Model matrices, shape (S, J, m)
        thetas: Parameter draws, shape (R, m)

    Returns:
        Array of shape (R, S, m, m)
    """
    thetas = np.atleast_2d(thetas)
    utilities = np.einsum("sjm,rm->rsj", X, thetas)
    p = softmax(utilities, axis=-1)
    weighted = np.einsum("rsj,sjm->rsm", p, X)
    return np.einsum("sjm,rsj,sjn->rsmn", X, p, X) - np.einsum("rsm,rsn->rsmn", weighted, weighted)


def information_stack(X: np.ndarray, thetas: np.ndarray) -> np.ndarray:
    """Design information matrices for every draw, shape (R, m, m)."""
    return set_information(X, thetas).sum(axis=1)


def information_matrix(spec: ModelSpec, theta: np.ndarray, design: Design) -> InfoMatrix:
    """
    Information matrix sum_s X_s^T (P_s - p_s p_s^T) X_s of a design.

    Args:
        spec: Model specification
        theta: Identified parameter vector of length m
        design: Design with matching q and r

    Returns:
        The m x m information matrix
    """
    theta = _check_theta(spec, theta)
    stack = information_stack(design_matrix(spec, design), theta[None, :])
    entries = stack[0]
    return InfoMatrix(0.5 * (entries + entries.T))


def cholesky_stack(matrices: np.ndarray) -> np.ndarray:
    """
    Lower Cholesky factors of a stack of symmetric matrices.

    A successful factorization is not enough: the 2-norm reciprocal condition
    number of every matrix must also reach SINGULAR_RCOND.

    Args:
        matrices: Array of shape (..., m, m)

    Returns:
        Lower-triangular factors with the same shape

    Raises:
        SingularInformationError: if any matrix is not positive definite or is
            too badly conditioned
    """
    try:
        factors = np.linalg.cholesky(matrices)
    except np.linalg.LinAlgError as e:
        raise SingularInformationError(f"information matrix is singular: {e}") from e
    if not np.all(np.isfinite(factors)):
        raise SingularInformationError("information matrix is numerically singular")
    rcond = 1.0 / np.linalg.cond(matrices)
    if np.any(~(rcond >= SINGULAR_RCOND)):
        raise SingularInformationError("information matrix is numerically singular")
    return factors


def prediction_variance(spec: ModelSpec, info: InfoMatrix, p: DesignPoint) -> float:
    """
    Variance f(p)^T I^{-1} f(p) of the predicted utility at one point.

    Uses a Cholesky solve; the inverse is never formed.
    """
    if info.m != spec.m:
        raise InvalidArgumentError(f"information matrix is {info.m}x{info.m}, model needs m={spec.m}")
    factor = cholesky_stack(info.entries)
    f = model_expand(spec, p)
    return float(f @ cho_solve((factor, True), f))
