"""
Multi-start coordinate-exchange search for Bayesian D- and I-optimal choice designs.

Each start sweeps the coordinates in a fixed order: for every choice set and
alternative, the q ingredient proportions (moved along the Cox direction),
then the r process settings. Every coordinate is optimized with Brent's
method and a move is kept only when it strictly improves the criterion.
"""

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple, Union

import numpy as np
from scipy.optimize import minimize_scalar

from app.models.design_models import OptimizerConfig
from app.services.design_model import Design, ModelSpec, cox_move, expand_points
from app.services.errors import AllStartsSingularError, InvalidArgumentError
from app.services.mnl_core import set_information
from app.services.optimality import (
    CriterionKind,
    CriterionValue,
    MomentsMatrix,
    bayesian_criterion,
    criterion_from_information,
    moments_matrix,
)

logger = logging.getLogger(__name__)

Seed = Union[int, np.random.SeedSequence]


@dataclass(frozen=True)
class StartResult:
    start: int
    initial_value: float
    final_value: float
    passes: int
    trace: Tuple[float, ...]
    design: Design = field(repr=False, compare=False)


@dataclass(frozen=True)
class OptimizationReport:
    best_design: Design = field(repr=False)
    best_value: CriterionValue
    per_start: Tuple[StartResult, ...]
    trace: Tuple[float, ...]
    seed: int
    wall_seconds: float

    @property
    def best_start(self) -> StartResult:
        return min(self.per_start, key=lambda result: (result.final_value, result.start))


def random_design(spec: ModelSpec, S: int, J: int, seed: Seed) -> Design:
    """
    Random initial design: mixtures uniform on the simplex, settings uniform on [-1, 1].

    Mixtures are normalized exponential spacings, i.e. Dirichlet(1, ..., 1).
    """
    if S < 1 or J < 2:
        raise InvalidArgumentError(f"need S >= 1 and J >= 2, got S={S}, J={J}")
    rng = np.random.default_rng(seed)
    spacings = rng.standard_exponential((S, J, spec.q))
    x = spacings / spacings.sum(axis=-1, keepdims=True)
    z = rng.uniform(-1.0, 1.0, (S, J, spec.r))
    return Design(x, z)


def brent_minimize(
    g: Callable[[float], float], lo: float, hi: float, tol: float, max_iter: int
) -> Tuple[float, float]:
    """
    Minimize g on [lo, hi] with Brent's golden-section / parabolic method.

    The bounded Brent search stays strictly inside the interval, so both endpoints are
    evaluated as well and the best point seen is returned. g may return +inf.

    Returns:
        (x*, g(x*))
    """
    if not lo < hi:
        raise InvalidArgumentError(f"need lo < hi, got [{lo}, {hi}]")
    with np.errstate(invalid="ignore", over="ignore"):
        result = minimize_scalar(
            g, bounds=(lo, hi), method="bounded", options={"xatol": tol, "maxiter": max_iter}
        )
    best_x, best_g = float(result.x), float(result.fun)
    for edge in (lo, hi):
        value = g(edge)
        if value < best_g:
            best_x, best_g = edge, value
    return best_x, best_g


class CoordinateExchangeOptimizer:
    """
    Coordinate exchange for one model, prior draw set and criterion.

    Per-set information blocks are cached for every draw, so a candidate move
    only recomputes the block of the choice set it touches.
    """

    def __init__(
        self,
        spec: ModelSpec,
        draws: np.ndarray,
        kind: CriterionKind,
        config: Optional[OptimizerConfig] = None,
        W: Optional[MomentsMatrix] = None,
    ):
        self.spec = spec
        self.draws = np.atleast_2d(np.asarray(draws, dtype=float))
        if self.draws.shape[1] != spec.m:
            raise InvalidArgumentError(f"draws have {self.draws.shape[1]} coefficients, model needs m={spec.m}")
        self.kind = CriterionKind(kind)
        self.config = config or OptimizerConfig()
        if self.kind is CriterionKind.I and W is None:
            W = moments_matrix(spec)
        self.W = W

        # working state of the start being optimized
        self._x: np.ndarray = np.empty(0)
        self._z: np.ndarray = np.empty(0)
        self._blocks: np.ndarray = np.empty(0)
        self._total: np.ndarray = np.empty(0)
        self.value = math.inf

    # state handling

    def load(self, design: Design) -> float:
        """Make design the current state and return its criterion value."""
        design.check_spec(self.spec)
        self._x = np.array(design.x)
        self._z = np.array(design.z)
        self._refresh()
        return self.value

    def _refresh(self) -> None:
        X = expand_points(self.spec, self._x, self._z)
        self._blocks = set_information(X, self.draws)
        self._total = self._blocks.sum(axis=1)
        self.value = criterion_from_information(self._total, self.kind, self.W)

    @property
    def design(self) -> Design:
        return Design(self._x.copy(), self._z.copy())

    def _candidate(self, s: int, j: int, x_new: np.ndarray, z_new: np.ndarray) -> Tuple[float, np.ndarray]:
        x_set = self._x[s].copy()
        z_set = self._z[s].copy()
        x_set[j] = x_new
        z_set[j] = z_new
        X = expand_points(self.spec, x_set, z_set)[None]
        block = set_information(X, self.draws)[:, 0]
        total = self._total - self._blocks[:, s] + block
        return criterion_from_information(total, self.kind, self.W), block

    def _improves(self, candidate: float) -> bool:
        if not math.isfinite(candidate):
            return False
        if not math.isfinite(self.value):
            return True
        return candidate < self.value - self.config.rel_tol * abs(self.value)

    def optimize_coordinate(self, s: int, j: int, coord: Tuple[str, int]) -> Tuple[bool, float]:
        """
        Brent-optimize one coordinate of alternative j in set s.

        Args:
            s: Choice set index
            j: Alternative index
            coord: ("mixture", i) or ("process", k)

        Returns:
            (accepted, current criterion value)
        """
        kind, index = coord
        x_old = self._x[s, j].copy()
        z_old = self._z[s, j].copy()

        if kind == "mixture":
            def build(delta: float) -> Tuple[np.ndarray, np.ndarray]:
                return cox_move(x_old, index, delta), z_old

            lo, hi = -x_old[index], 1.0 - x_old[index]
        elif kind == "process":
            def build(setting: float) -> Tuple[np.ndarray, np.ndarray]:
                z_new = z_old.copy()
                z_new[index] = setting
                return x_old, z_new

            lo, hi = -1.0, 1.0
        else:
            raise InvalidArgumentError(f"unknown coordinate kind {kind!r}")

        def g(t: float) -> float:
            return self._candidate(s, j, *build(t))[0]

        t_best, _ = brent_minimize(g, lo, hi, self.config.brent_tol, self.config.brent_max_iter)
        x_new, z_new = build(t_best)
        candidate, block = self._candidate(s, j, x_new, z_new)
        if not self._improves(candidate):
            return False, self.value
        self._x[s, j] = x_new
        self._z[s, j] = z_new
        self._total = self._total - self._blocks[:, s] + block
        self._blocks[:, s] = block
        self.value = candidate
        return True, candidate

    def _coordinates(self) -> List[Tuple[str, int]]:
        return [("mixture", i) for i in range(self.spec.q)] + [("process", k) for k in range(self.spec.r)]

    def run_start(self, start: int, initial: Design) -> StartResult:
        """Sweep until a pass changes nothing or max_passes is reached."""
        initial_value = self.load(initial)
        trace = [initial_value]
        passes = 0
        for passes in range(1, self.config.max_passes + 1):
            accepted = 0
            for s in range(self._x.shape[0]):
                for j in range(self._x.shape[1]):
                    for coord in self._coordinates():
                        moved, value = self.optimize_coordinate(s, j, coord)
                        if moved:
                            accepted += 1
                            trace.append(value)
            # rebuild the cached sums so incremental updates do not drift
            self._refresh()
            logger.debug(f"Start {start} pass {passes}: {accepted} moves, value {self.value:.6g}")
            if accepted == 0:
                break
        logger.info(f"Start {start}: {initial_value:.6g} -> {self.value:.6g} in {passes} passes")
        return StartResult(start, initial_value, self.value, passes, tuple(trace), self.design)


def _run_one(
    spec: ModelSpec,
    draws: np.ndarray,
    kind: CriterionKind,
    config: OptimizerConfig,
    W: Optional[MomentsMatrix],
    start: int,
    initial: Design,
) -> StartResult:
    return CoordinateExchangeOptimizer(spec, draws, kind, config, W).run_start(start, initial)


def coordinate_exchange(
    spec: ModelSpec,
    S: int,
    J: int,
    draws: np.ndarray,
    kind: CriterionKind,
    config: Optional[OptimizerConfig] = None,
    W: Optional[MomentsMatrix] = None,
    bayesian: Optional[bool] = None,
) -> OptimizationReport:
    """
    Run n_starts coordinate-exchange searches from random designs and keep the best.

    Args:
        spec: Model specification
        S: Number of choice sets
        J: Alternatives per set
        draws: Prior draws, shape (R, m); a single row gives a locally optimal design
        kind: D or I
        config: Search settings
        W: Moments matrix for the I-criterion (computed when omitted)
        bayesian: Flag stored on the reported criterion value

    Returns:
        OptimizationReport with the best design and every start's summary
    """
    config = config or OptimizerConfig()
    kind = CriterionKind(kind)
    draws = np.atleast_2d(np.asarray(draws, dtype=float))
    if kind is CriterionKind.I and W is None:
        W = moments_matrix(spec)
    started = time.perf_counter()

    seeds = np.random.SeedSequence(config.seed).spawn(config.n_starts)
    initials = [random_design(spec, S, J, seed) for seed in seeds]
    logger.info(
        f"Coordinate exchange: {kind.value.upper()}-criterion, q={spec.q}, r={spec.r}, "
        f"S={S}, J={J}, R={draws.shape[0]}, {config.n_starts} starts"
    )

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            futures = [
                pool.submit(_run_one, spec, draws, kind, config, W, start, initial)
                for start, initial in enumerate(initials)
            ]
            results = [future.result() for future in futures]
    else:
        results = [_run_one(spec, draws, kind, config, W, start, initial) for start, initial in enumerate(initials)]

    finite = [result for result in results if math.isfinite(result.final_value)]
    if not finite:
        raise AllStartsSingularError(config.n_starts, S)
    best = min(finite, key=lambda result: (result.final_value, result.start))
    value = bayesian_criterion(spec, best.design, draws, kind, W, bayesian=bayesian)
    elapsed = time.perf_counter() - started
    logger.info(f"Best start {best.start}: value {value.value:.6g} ({elapsed:.1f}s)")
    return OptimizationReport(
        best_design=best.design,
        best_value=value,
        per_start=tuple(results),
        trace=best.trace,
        seed=config.seed,
        wall_seconds=elapsed,
    )
