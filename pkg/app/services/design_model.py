"""
Experimental region, identified model expansion and mixture moves.

The utility model combines a second-order Scheffe model in the q ingredient
proportions with mixture-by-process crossings, process interactions and
process quadratics. One first-order mixture term is dropped so the model is
identified under the multinomial logit.
"""

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations
from typing import List, Optional, Sequence, Tuple

import numpy as np

from app.services.config import RENORMALIZE_TOL, SIMPLEX_TOL, VERTEX_TOL
from app.services.errors import CoxRangeError, InvalidArgumentError, RegionViolationError

logger = logging.getLogger(__name__)


def param_count(q: int, r: int) -> int:
    """
    Number of identified parameters of the compromise model.

    Args:
        q: Number of ingredients (at least 2)
        r: Number of process variables (at least 0)

    Returns:
        q + q(q-1)/2 + qr + r(r-1)/2 + r - 1
    """
    if q < 2:
        raise InvalidArgumentError(f"need at least 2 ingredients, got q={q}")
    if r < 0:
        raise InvalidArgumentError(f"process variable count must be >= 0, got r={r}")
    return q + q * (q - 1) // 2 + q * r + r * (r - 1) // 2 + r - 1


@dataclass(frozen=True)
class MonomialTerm:
    """One entry of the model expansion: prod x_k^n_k * prod z_l^m_l."""

    mixture: Tuple[int, ...]
    process: Tuple[int, ...]

    @property
    def label(self) -> str:
        factors = []
        for name, exps in (("x", self.mixture), ("z", self.process)):
            for k, n in enumerate(exps, start=1):
                if n == 1:
                    factors.append(f"{name}{k}")
                elif n > 1:
                    factors.append(f"{name}{k}^{n}")
        return "*".join(factors) or "1"

    def times(self, other: "MonomialTerm") -> "MonomialTerm":
        return MonomialTerm(
            tuple(a + b for a, b in zip(self.mixture, other.mixture)),
            tuple(a + b for a, b in zip(self.process, other.process)),
        )


@dataclass(frozen=True)
class ModelSpec:
    """
    Dimensions of a mixture-process choice model and its term layout.

    Term order: x_1..x_{q-1}; x_i x_k (i<k); x_k z_i grouped by i then k;
    z_i z_k (i<k); z_i^2.
    """

    q: int
    r: int = 0

    def __post_init__(self):
        # raises on bad dimensions
        param_count(self.q, self.r)

    @property
    def m(self) -> int:
        return param_count(self.q, self.r)

    @cached_property
    def term_table(self) -> Tuple[MonomialTerm, ...]:
        q, r = self.q, self.r

        def unit(size: int, *positions: int) -> Tuple[int, ...]:
            exps = [0] * size
            for p in positions:
                exps[p] += 1
            return tuple(exps)

        terms: List[MonomialTerm] = []
        for i in range(q - 1):
            terms.append(MonomialTerm(unit(q, i), unit(r)))
        for i, k in combinations(range(q), 2):
            terms.append(MonomialTerm(unit(q, i, k), unit(r)))
        for i in range(r):
            for k in range(q):
                terms.append(MonomialTerm(unit(q, k), unit(r, i)))
        for i, k in combinations(range(r), 2):
            terms.append(MonomialTerm(unit(q), unit(r, i, k)))
        for i in range(r):
            terms.append(MonomialTerm(unit(q), unit(r, i, i)))
        return tuple(terms)

    @cached_property
    def term_labels(self) -> Tuple[str, ...]:
        return tuple(term.label for term in self.term_table)

    @cached_property
    def mixture_exponents(self) -> np.ndarray:
        exps = np.array([t.mixture for t in self.term_table], dtype=float).reshape(self.m, self.q)
        exps.setflags(write=False)
        return exps

    @cached_property
    def process_exponents(self) -> np.ndarray:
        exps = np.array([t.process for t in self.term_table], dtype=float).reshape(self.m, self.r)
        exps.setflags(write=False)
        return exps


def _clean_mixture(x: np.ndarray) -> np.ndarray:
    """Apply the ingestion rule for ingredient proportions along the last axis."""
    x = np.array(x, dtype=float)
    if np.any(x < -SIMPLEX_TOL) or np.any(x > 1 + SIMPLEX_TOL):
        raise RegionViolationError("ingredient proportions must lie in [0, 1]")
    x = np.clip(x, 0.0, None)
    totals = x.sum(axis=-1, keepdims=True)
    deviation = np.abs(totals - 1.0)
    if np.any(deviation > RENORMALIZE_TOL):
        worst = float(deviation.max())
        raise RegionViolationError(f"ingredient proportions do not sum to 1 (deviation {worst:.3g})")
    if np.any(deviation > SIMPLEX_TOL):
        logger.warning(f"Renormalizing {int(np.sum(deviation > SIMPLEX_TOL))} mixture(s) to sum to one")
        x = np.where(deviation > SIMPLEX_TOL, x / totals, x)
    return x


def _clean_process(z: np.ndarray) -> np.ndarray:
    z = np.array(z, dtype=float)
    if np.any(np.abs(z) > 1 + SIMPLEX_TOL):
        raise RegionViolationError("process settings must lie in [-1, 1]")
    return np.clip(z, -1.0, 1.0)


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DesignPoint:
    """A single mixture (x, summing to one) processed at settings z in [-1, 1]^r."""

    x: np.ndarray
    z: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        x = _clean_mixture(np.atleast_1d(self.x))
        z = _clean_process(np.atleast_1d(self.z))
        if x.ndim != 1 or z.ndim != 1:
            raise InvalidArgumentError("design point coordinates must be vectors")
        object.__setattr__(self, "x", _readonly(x))
        object.__setattr__(self, "z", _readonly(z))


@dataclass(frozen=True, eq=False)
class Design:
    """
    S choice sets of J alternatives.

    x has shape (S, J, q) and z has shape (S, J, r).
    """

    x: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        z = np.asarray(self.z, dtype=float)
        if x.ndim != 3:
            raise InvalidArgumentError(f"mixture array must have shape (S, J, q), got {x.shape}")
        if z.ndim == 2 and z.size == 0:
            z = z.reshape(x.shape[0], x.shape[1], 0)
        if z.ndim != 3 or z.shape[:2] != x.shape[:2]:
            raise InvalidArgumentError(f"process array shape {z.shape} does not match mixture array {x.shape}")
        if x.shape[0] < 1 or x.shape[1] < 2:
            raise InvalidArgumentError(f"need S >= 1 and J >= 2, got S={x.shape[0]}, J={x.shape[1]}")
        object.__setattr__(self, "x", _readonly(_clean_mixture(x)))
        object.__setattr__(self, "z", _readonly(_clean_process(z)))

    @classmethod
    def from_arrays(cls, x, z=None) -> "Design":
        x = np.asarray(x, dtype=float)
        if z is None:
            z = np.zeros(x.shape[:2] + (0,))
        return cls(x, z)

    @property
    def S(self) -> int:
        return self.x.shape[0]

    @property
    def J(self) -> int:
        return self.x.shape[1]

    @property
    def q(self) -> int:
        return self.x.shape[2]

    @property
    def r(self) -> int:
        return self.z.shape[2]

    def point(self, s: int, j: int) -> DesignPoint:
        return DesignPoint(self.x[s, j], self.z[s, j])

    def check_spec(self, spec: ModelSpec) -> None:
        if (self.q, self.r) != (spec.q, spec.r):
            raise InvalidArgumentError(
                f"design has q={self.q}, r={self.r} but the model expects q={spec.q}, r={spec.r}"
            )


@dataclass(frozen=True)
class IngredientBounds:
    """Lower bounds on the true ingredient proportions."""

    lower: Tuple[float, ...]

    def __post_init__(self):
        lower = tuple(float(v) for v in self.lower)
        if any(v < 0 for v in lower):
            raise InvalidArgumentError("ingredient lower bounds must be non-negative")
        if sum(lower) >= 1:
            raise InvalidArgumentError(f"sum of lower bounds must be below 1, got {sum(lower):.6g}")
        object.__setattr__(self, "lower", lower)

    @property
    def L(self) -> float:
        return sum(self.lower)


def expand_points(spec: ModelSpec, x: np.ndarray, z: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Evaluate f(a) for many points at once.

    Args:
        spec: Model specification
        x: Ingredient proportions, shape (..., q)
        z: Process settings, shape (..., r)

    Returns:
        Model expansions, shape (..., m)
    """
    x = np.asarray(x, dtype=float)
    if z is None:
        z = np.zeros(x.shape[:-1] + (spec.r,))
    z = np.asarray(z, dtype=float)
    if x.shape[-1] != spec.q or z.shape[-1] != spec.r or x.shape[:-1] != z.shape[:-1]:
        raise InvalidArgumentError(
            f"point dimensions x{x.shape}, z{z.shape} do not match q={spec.q}, r={spec.r}"
        )
    mix = np.prod(x[..., None, :] ** spec.mixture_exponents, axis=-1)
    proc = np.prod(z[..., None, :] ** spec.process_exponents, axis=-1)
    return mix * proc


def model_expand(spec: ModelSpec, p: DesignPoint) -> np.ndarray:
    """Model expansion f(a) of a single design point, in term_table order."""
    return expand_points(spec, p.x, p.z)


def region_volume(spec: ModelSpec) -> float:
    """Volume of simplex x hypercube: 2^r / (q-1)!."""
    return 2.0 ** spec.r / math.factorial(spec.q - 1)


def to_pseudocomponents(a: Sequence[float], bounds: IngredientBounds) -> np.ndarray:
    """
    Map true proportions a onto the unit simplex: x_i = (a_i - L_i) / (1 - L).
    """
    a = np.asarray(a, dtype=float)
    lower = np.asarray(bounds.lower)
    if a.shape != lower.shape:
        raise InvalidArgumentError(f"expected {lower.size} proportions, got {a.size}")
    if abs(a.sum() - 1.0) > RENORMALIZE_TOL:
        raise RegionViolationError(f"true proportions sum to {a.sum():.6g}, not 1")
    if np.any(a < lower - SIMPLEX_TOL):
        raise RegionViolationError(f"proportions {a.tolist()} violate lower bounds {list(bounds.lower)}")
    return np.clip((a - lower) / (1.0 - bounds.L), 0.0, 1.0)


def from_pseudocomponents(x: Sequence[float], bounds: IngredientBounds) -> np.ndarray:
    """Inverse of to_pseudocomponents: a_i = L_i + (1 - L) x_i. Works along the last axis."""
    x = np.asarray(x, dtype=float)
    lower = np.asarray(bounds.lower)
    if x.shape[-1] != lower.size:
        raise InvalidArgumentError(f"expected {lower.size} proportions, got {x.shape[-1]}")
    return lower + (1.0 - bounds.L) * x


def cox_move(x: Sequence[float], i: int, delta: float) -> np.ndarray:
    """
    Change ingredient i by delta along the Cox effect direction.

    The other proportions are rescaled so that their ratios are kept and the
    mixture still sums to one. At a vertex (x_i = 1) the remainder is split
    equally over the other q - 1 ingredients.

    Args:
        x: Current proportions on the simplex
        i: 0-based index of the ingredient to move
        delta: Signed change of x_i

    Returns:
        New proportions
    """
    x = np.asarray(x, dtype=float)
    q = x.size
    if not 0 <= i < q:
        raise InvalidArgumentError(f"ingredient index {i} out of range for q={q}")
    target = x[i] + delta
    if target < -VERTEX_TOL or target > 1 + VERTEX_TOL:
        raise CoxRangeError(f"x[{i}] + delta = {target:.6g} is outside [0, 1]")
    target = min(max(target, 0.0), 1.0)

    others = np.delete(x, i)
    remainder = others.sum()
    if 1.0 - x[i] <= VERTEX_TOL or remainder <= 0.0:
        others = np.full(q - 1, (1.0 - target) / (q - 1))
    else:
        # ratios kept; scaled by the actual remainder so the result sums to one
        others = others * ((1.0 - target) / remainder)
    moved = np.insert(others, i, target)
    return np.clip(moved, 0.0, 1.0)
