"""
Moments matrix and the D- and I-optimality criteria, local and Bayesian.

Criterion values are "lower is better". A singular information matrix gives
the value +inf so that search code can reject such designs uniformly.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from functools import lru_cache
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import cho_solve

from app.services.config import MAX_FACTORIAL_ARG
from app.services.design_model import Design, ModelSpec
from app.services.errors import InvalidArgumentError, MomentOverflowError, SingularInformationError
from app.services.mnl_core import InfoMatrix, cholesky_stack, design_matrix, information_stack

logger = logging.getLogger(__name__)


class CriterionKind(str, Enum):
    D = "d"
    I = "i"


@dataclass(frozen=True)
class CriterionValue:
    value: float
    kind: CriterionKind
    bayesian: bool
    draws_used: int

    @property
    def is_singular(self) -> bool:
        return math.isinf(self.value)


@dataclass(frozen=True, eq=False)
class MomentsMatrix:
    """Exact region moments W_ij = integral of f_i f_j over simplex x [-1, 1]^r."""

    exact: Tuple[Tuple[Fraction, ...], ...]
    values: np.ndarray

    @property
    def m(self) -> int:
        return len(self.exact)


def simplex_moment(n: Sequence[int]) -> Fraction:
    """
    Integral of prod x_k^n_k over the (q-1)-simplex: prod n_k! / (q - 1 + sum n_k)!.
    """
    n = [int(v) for v in n]
    if len(n) < 2:
        raise InvalidArgumentError(f"need at least 2 mixture exponents, got {len(n)}")
    if any(v < 0 for v in n):
        raise InvalidArgumentError(f"exponents must be non-negative, got {n}")
    top = len(n) - 1 + sum(n)
    if top > MAX_FACTORIAL_ARG:
        raise MomentOverflowError(f"({top})! exceeds the supported factorial range")
    numerator = math.prod(math.factorial(v) for v in n)
    return Fraction(numerator, math.factorial(top))


def box_moment(mexp: Sequence[int], bounds: Optional[Sequence[Tuple[float, float]]] = None) -> Fraction:
    """
    Integral of prod z_l^m_l over the process box.

    Args:
        mexp: Process exponents m_1..m_r
        bounds: Optional (a_l, b_l) interval per process variable; defaults to [-1, 1]

    Returns:
        prod_l (b_l^(m_l+1) - a_l^(m_l+1)) / (m_l + 1); 1 for r = 0
    """
    mexp = [int(v) for v in mexp]
    if bounds is None:
        bounds = [(-1, 1)] * len(mexp)
    if len(bounds) != len(mexp):
        raise InvalidArgumentError(f"{len(bounds)} intervals given for {len(mexp)} process variables")
    result = Fraction(1)
    for power, (low, high) in zip(mexp, bounds):
        if power < 0:
            raise InvalidArgumentError(f"exponents must be non-negative, got {mexp}")
        low, high = Fraction(low), Fraction(high)
        result *= (high ** (power + 1) - low ** (power + 1)) / (power + 1)
    return result


@lru_cache(maxsize=None)
def moments_matrix(spec: ModelSpec) -> MomentsMatrix:
    """
    Moments matrix W for the model's term table, exact and as floats.

    Entries multiply the simplex and box moments of the product monomial
    term_i * term_j. The result depends only on (q, r) and is cached.
    """
    terms = spec.term_table
    exact = []
    for ti in terms:
        row = []
        for tj in terms:
            product = ti.times(tj)
            row.append(box_moment(product.process) * simplex_moment(product.mixture))
        exact.append(tuple(row))
    values = np.array([[float(v) for v in row] for row in exact])
    values.setflags(write=False)
    logger.debug(f"Built {spec.m}x{spec.m} moments matrix for q={spec.q}, r={spec.r}")
    return MomentsMatrix(tuple(exact), values)


def d_values(factors: np.ndarray) -> np.ndarray:
    """det(I^{-1})^{1/m} = exp(-logdet(I)/m) for a stack of Cholesky factors."""
    m = factors.shape[-1]
    logdet = 2.0 * np.log(np.diagonal(factors, axis1=-2, axis2=-1)).sum(axis=-1)
    return np.exp(-logdet / m)


def i_values(factors: np.ndarray, W: np.ndarray) -> np.ndarray:
    """tr(I^{-1} W) for a stack of Cholesky factors, via cho_solve on each factor."""
    m = factors.shape[-1]
    stack = factors.reshape(-1, m, m)
    traces = np.array([np.trace(cho_solve((factor, True), W)) for factor in stack])
    return traces.reshape(factors.shape[:-2])


def d_value(info: InfoMatrix, m: Optional[int] = None) -> float:
    """Local D-value of an information matrix; +inf if it is singular."""
    if m is not None and m != info.m:
        raise InvalidArgumentError(f"m={m} does not match the {info.m}x{info.m} information matrix")
    try:
        factor = cholesky_stack(info.entries)
    except SingularInformationError:
        return math.inf
    return float(d_values(factor))


def i_value(info: InfoMatrix, W: MomentsMatrix) -> float:
    """Local I-value tr(I^{-1} W); +inf if the information matrix is singular."""
    if W.m != info.m:
        raise InvalidArgumentError(f"moments matrix is {W.m}x{W.m}, information matrix is {info.m}x{info.m}")
    try:
        factor = cholesky_stack(info.entries)
    except SingularInformationError:
        return math.inf
    return float(i_values(factor, W.values))


def criterion_from_information(
    infos: np.ndarray, kind: CriterionKind, W: Optional[MomentsMatrix] = None
) -> float:
    """
    Average criterion over a stack of information matrices (R, m, m).

    Any singular matrix makes the whole value +inf. The draw terms are reduced
    sequentially in draw order.
    """
    try:
        factors = cholesky_stack(infos)
    except SingularInformationError:
        return math.inf
    if kind is CriterionKind.D:
        per_draw = d_values(factors)
    else:
        if W is None:
            raise InvalidArgumentError("the I-criterion needs a moments matrix")
        per_draw = i_values(factors, W.values)
    total = 0.0
    for value in per_draw:
        total += float(value)
    return total / len(per_draw)


def bayesian_criterion(
    spec: ModelSpec,
    design: Design,
    draws: np.ndarray,
    kind: CriterionKind,
    W: Optional[MomentsMatrix] = None,
    bayesian: Optional[bool] = None,
) -> CriterionValue:
    """
    Criterion averaged over prior draws (a single draw gives the local criterion).

    Args:
        spec: Model specification
        design: Design to evaluate
        draws: Parameter draws, shape (R, m)
        kind: D or I
        W: Moments matrix, required for the I-criterion
        bayesian: Whether the draws come from a prior distribution; defaults to R > 1

    Returns:
        CriterionValue with +inf when any draw gives singular information
    """
    kind = CriterionKind(kind)
    draws = np.atleast_2d(np.asarray(draws, dtype=float))
    if draws.shape[0] == 0:
        raise InvalidArgumentError("at least one prior draw is needed")
    if draws.shape[1] != spec.m:
        raise InvalidArgumentError(f"draws have {draws.shape[1]} coefficients, model needs m={spec.m}")
    if kind is CriterionKind.I and W is None:
        raise InvalidArgumentError("the I-criterion needs a moments matrix")
    infos = information_stack(design_matrix(spec, design), draws)
    value = criterion_from_information(infos, kind, W)
    if bayesian is None:
        bayesian = draws.shape[0] > 1
    return CriterionValue(value=value, kind=kind, bayesian=bayesian, draws_used=draws.shape[0])
