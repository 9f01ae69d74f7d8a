from fastapi import APIRouter, Depends, HTTPException, Query
from fastapi.responses import Response
import logging

from app.models.design_models import (
    EvaluateRequest,
    EvaluateResponse,
    GenerateRequest,
    GenerateResponse,
    MomentsResponse,
    RunReport,
)
from app.services.config import EXIT_NUMERICAL_FAILURE
from app.services.design_io import design_from_rows, design_rows
from app.services.design_model import ModelSpec
from app.services.errors import ConfigError, MixChoiceError
from app.services.optimality import CriterionKind, bayesian_criterion, moments_matrix
from app.services.optimizer import coordinate_exchange

logger = logging.getLogger(__name__)

router = APIRouter()


def error_status(error: MixChoiceError) -> int:
    """409 for numerical failures, 422 for invalid documents, 400 for other bad input."""
    if error.exit_code == EXIT_NUMERICAL_FAILURE:
        return 409
    if isinstance(error, ConfigError):
        return 422
    return 400


# Dependency to build the model from query parameters
def get_spec(
    q: int = Query(..., ge=2, description="Number of ingredients"),
    r: int = Query(0, ge=0, description="Number of process variables"),
) -> ModelSpec:
    try:
        return ModelSpec(q, r)
    except MixChoiceError as e:
        raise HTTPException(status_code=error_status(e), detail=str(e))


@router.get("/moments", response_model=MomentsResponse)
def moments(spec: ModelSpec = Depends(get_spec)):
    """
    Exact moments matrix of the model as 'p/q' strings, with its term labels.
    """
    try:
        W = moments_matrix(spec)
    except MixChoiceError as e:
        logger.error(f"Moments for q={spec.q}, r={spec.r} failed: {e}")
        raise HTTPException(status_code=error_status(e), detail=str(e))
    return MomentsResponse(
        q=spec.q,
        r=spec.r,
        terms=list(spec.term_labels),
        exact=[[str(value) for value in row] for row in W.exact],
    )


@router.post("/evaluate", response_model=EvaluateResponse)
def evaluate(request: EvaluateRequest):
    """
    D- and I-value of a design under a prior. A singular design is a 409.
    """
    try:
        spec = ModelSpec(request.prior.q, request.prior.r)
        design = design_from_rows(request.rows, spec)
        draws, bayesian = request.prior.run_draws(request.bayesian)
        d = bayesian_criterion(spec, design, draws, CriterionKind.D, bayesian=bayesian)
        i = bayesian_criterion(spec, design, draws, CriterionKind.I, moments_matrix(spec), bayesian=bayesian)
    except MixChoiceError as e:
        logger.error(f"Evaluation failed: {e}")
        raise HTTPException(status_code=error_status(e), detail=str(e))

    if d.is_singular or i.is_singular:
        raise HTTPException(status_code=409, detail="information matrix is singular")
    return EvaluateResponse(d_value=d.value, i_value=i.value, bayesian=bayesian, draws=draws.shape[0])


@router.post("/generate", response_model=GenerateResponse)
def generate(request: GenerateRequest):
    """
    Run the coordinate-exchange search and return the best design with its report.
    """
    problem = request.problem
    if (request.prior.q, request.prior.r) != (problem.q, problem.r):
        raise HTTPException(
            status_code=422,
            detail=f"prior is for q={request.prior.q}, r={request.prior.r} but the problem has q={problem.q}, r={problem.r}",
        )
    try:
        spec = ModelSpec(problem.q, problem.r)
        draws, bayesian = request.prior.run_draws(request.bayesian)
        kind = request.criterion
        W = moments_matrix(spec) if kind is CriterionKind.I else None
        result = coordinate_exchange(spec, problem.S, problem.J, draws, kind, request.optimizer, W, bayesian=bayesian)
    except MixChoiceError as e:
        logger.error(f"Generation failed: {e}")
        raise HTTPException(status_code=error_status(e), detail=str(e))
    except Exception as e:
        logger.error(f"Unexpected error during generation: {e}", exc_info=True)
        raise HTTPException(status_code=500, detail="An error occurred while generating the design")

    report = RunReport.from_optimization(result, kind, bayesian, draws.shape[0], result.best_value.value)
    body = GenerateResponse(rows=design_rows(result.best_design), report=report)
    # start traces may hold +inf, which the default JSON response rejects
    return Response(content=body.model_dump_json(), media_type="application/json")
