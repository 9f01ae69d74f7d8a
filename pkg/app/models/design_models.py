from typing import TYPE_CHECKING, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.services.config import (
    DEFAULT_DRAWS,
    DEFAULT_FDS_POINTS,
    DEFAULT_FDS_SEED,
    DEFAULT_HALTON_SKIP,
    MIN_FDS_POINTS,
    OPTIMIZER_DEFAULTS,
)
from app.services.design_model import IngredientBounds, param_count
from app.services.optimality import CriterionKind
from app.services.prior import (
    PriorKind,
    PriorSpec,
    UnidentifiedPrior,
    identification_matrix,
    identify_prior,
    prior_draws,
)

if TYPE_CHECKING:
    from app.services.optimizer import OptimizationReport


class OptimizerConfig(BaseModel):
    """
    Settings of the multi-start coordinate-exchange search.
    """
    model_config = ConfigDict(extra="forbid")

    n_starts: int = Field(OPTIMIZER_DEFAULTS["n_starts"], ge=1, description="Number of random initial designs")
    max_passes: int = Field(OPTIMIZER_DEFAULTS["max_passes"], ge=1, description="Maximum full sweeps per start")
    rel_tol: float = Field(OPTIMIZER_DEFAULTS["rel_tol"], gt=0, description="Relative improvement needed to accept a move")
    brent_tol: float = Field(OPTIMIZER_DEFAULTS["brent_tol"], gt=0, description="Brent x-tolerance in coordinate units")
    brent_max_iter: int = Field(OPTIMIZER_DEFAULTS["brent_max_iter"], ge=1)
    seed: int = Field(OPTIMIZER_DEFAULTS["seed"], ge=0, lt=2**64)
    workers: int = Field(OPTIMIZER_DEFAULTS["workers"], ge=1, description="Threads used to run starts")


class ProblemConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    q: int = Field(..., ge=2, description="Number of ingredients")
    r: int = Field(0, ge=0, description="Number of process variables")
    S: int = Field(..., ge=1, description="Number of choice sets")
    J: int = Field(2, ge=2, description="Alternatives per choice set")


class DiagCovariance(BaseModel):
    diag: List[float]


class KappaCovariance(BaseModel):
    kappa: float = Field(..., ge=0)
    identity_dim: int = Field(..., ge=1)


class PriorFile(BaseModel):
    """
    Prior document. Unidentified priors carry all q first-order mixture
    coefficients and are transformed on load.
    """
    model_config = ConfigDict(extra="forbid")

    q: int = Field(..., ge=2)
    r: int = Field(0, ge=0)
    kind: PriorKind = PriorKind.NORMAL
    space: Literal["identified", "unidentified"] = "identified"
    mean: List[float]
    covariance: Optional[Union[List[List[float]], DiagCovariance, KappaCovariance]] = None
    draws: Optional[int] = Field(None, ge=1)
    skip: int = Field(DEFAULT_HALTON_SKIP, ge=0)

    @model_validator(mode="after")
    def check_dimensions(self) -> "PriorFile":
        m = param_count(self.q, self.r)
        expected = m + 1 if self.space == "unidentified" else m
        if len(self.mean) != expected:
            raise ValueError(f"{self.space} prior for q={self.q}, r={self.r} needs {expected} means, got {len(self.mean)}")
        if self.kind is PriorKind.POINT:
            if self.draws not in (None, 1):
                raise ValueError("a point prior has exactly one draw")
        elif self.covariance is None:
            raise ValueError("a normal prior needs a covariance")
        if self.covariance is not None and self.covariance_matrix().shape != (expected, expected):
            raise ValueError(f"covariance must be {expected}x{expected}")
        return self

    def covariance_matrix(self) -> np.ndarray:
        cov = self.covariance
        if isinstance(cov, DiagCovariance):
            return np.diag(cov.diag)
        if isinstance(cov, KappaCovariance):
            return cov.kappa * np.eye(cov.identity_dim)
        return np.array(cov, dtype=float)

    def to_prior_spec(self) -> PriorSpec:
        if self.kind is PriorKind.POINT:
            mean = np.array(self.mean)
            if self.space == "unidentified":
                mean = identification_matrix(self.q, self.r) @ mean
            return PriorSpec(PriorKind.POINT, mean)
        draws = self.draws or DEFAULT_DRAWS
        if self.space == "unidentified":
            u = UnidentifiedPrior(np.array(self.mean), self.covariance_matrix())
            return identify_prior(u, self.q, draws=draws, skip=self.skip)
        return PriorSpec(PriorKind.NORMAL, np.array(self.mean), self.covariance_matrix(), draws=draws, skip=self.skip)

    def run_draws(self, bayesian: bool = True) -> Tuple[np.ndarray, bool]:
        """
        Draws a run averages over and whether they form a Bayesian average.

        With bayesian=False a normal prior contributes only its mean.
        """
        prior = self.to_prior_spec()
        if not bayesian or prior.kind is PriorKind.POINT:
            return prior.mean[None, :].copy(), False
        return prior_draws(prior), True


class IngredientsConfig(BaseModel):
    names: Optional[List[str]] = None
    lower_bounds: List[float]

    def bounds(self) -> IngredientBounds:
        return IngredientBounds(tuple(self.lower_bounds))


class OutputsConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    design_csv: str
    report_json: str
    fds_csv: Optional[str] = None
    fds_svg: Optional[str] = None
    comparison_csv: Optional[str] = None
    true_proportions_csv: Optional[str] = None


class FdsConfig(BaseModel):
    M: int = Field(DEFAULT_FDS_POINTS, ge=MIN_FDS_POINTS, description="Number of region samples")
    seed: int = Field(DEFAULT_FDS_SEED, ge=0)


class RunConfig(BaseModel):
    """
    A complete run: problem size, prior, criterion, search settings and outputs.
    """
    model_config = ConfigDict(extra="forbid")

    problem: ProblemConfig
    prior: PriorFile
    criterion: CriterionKind = CriterionKind.D
    bayesian: bool = Field(True, description="Average over prior draws; False uses the prior mean only")
    optimizer: OptimizerConfig = Field(default_factory=OptimizerConfig)
    outputs: OutputsConfig
    fds: FdsConfig = Field(default_factory=FdsConfig)
    ingredients: Optional[IngredientsConfig] = None

    @model_validator(mode="after")
    def check_consistency(self) -> "RunConfig":
        if (self.prior.q, self.prior.r) != (self.problem.q, self.problem.r):
            raise ValueError(
                f"prior is for q={self.prior.q}, r={self.prior.r} but the problem has "
                f"q={self.problem.q}, r={self.problem.r}"
            )
        if self.ingredients is not None and len(self.ingredients.lower_bounds) != self.problem.q:
            raise ValueError(f"need {self.problem.q} ingredient lower bounds")
        return self


class StartSummary(BaseModel):
    model_config = ConfigDict(ser_json_inf_nan="constants")

    start: int
    initial_value: float
    final_value: float
    passes: int
    trace: List[float]


class RunReport(BaseModel):
    """
    Report written next to a generated design.
    """
    model_config = ConfigDict(ser_json_inf_nan="constants")

    criterion: str = Field(..., description="Criterion name, e.g. 'bayesian_i' or 'local_d'")
    kind: CriterionKind
    bayesian: bool
    value: float
    draws: int
    seed: int
    starts: List[StartSummary]
    passes: int = Field(..., description="Passes used by the best start")
    wall_seconds: float

    @classmethod
    def from_optimization(
        cls, result: "OptimizationReport", kind: CriterionKind, bayesian: bool, draws: int, value: float
    ) -> "RunReport":
        return cls(
            criterion=f"{'bayesian' if bayesian else 'local'}_{CriterionKind(kind).value}",
            kind=kind,
            bayesian=bayesian,
            value=value,
            draws=draws,
            seed=result.seed,
            starts=[
                StartSummary(
                    start=r.start,
                    initial_value=r.initial_value,
                    final_value=r.final_value,
                    passes=r.passes,
                    trace=list(r.trace),
                )
                for r in result.per_start
            ],
            passes=result.best_start.passes,
            wall_seconds=result.wall_seconds,
        )


class DesignRow(BaseModel):
    choice_set: int = Field(..., ge=1)
    alternative: int = Field(..., ge=1)
    x: List[float]
    z: List[float] = Field(default_factory=list)


class EvaluateRequest(BaseModel):
    prior: PriorFile
    bayesian: bool = True
    rows: List[DesignRow]


class EvaluateResponse(BaseModel):
    """
    D- and I-values of a design; +inf marks a singular design.
    """
    model_config = ConfigDict(ser_json_inf_nan="constants")

    d_value: float
    i_value: float
    bayesian: bool
    draws: int


class GenerateRequest(BaseModel):
    problem: ProblemConfig
    prior: PriorFile
    criterion: CriterionKind = CriterionKind.D
    bayesian: bool = True
    optimizer: OptimizerConfig = Field(default_factory=OptimizerConfig)


class GenerateResponse(BaseModel):
    model_config = ConfigDict(ser_json_inf_nan="constants")

    rows: List[DesignRow]
    report: RunReport


class MomentsResponse(BaseModel):
    q: int
    r: int
    terms: List[str]
    exact: List[List[str]] = Field(..., description="Moments matrix entries as 'p/q' strings")
