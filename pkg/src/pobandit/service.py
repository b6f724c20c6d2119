"""HTTP service exposing index evaluation, policy comparison and verification.

The index endpoint is the online decision-support surface: post an arm, a
belief and a discount, get the approximate Whittle index with its full
ingredient breakdown.  Compare and verify are batch endpoints sized for
desk-scale experiments; the CLI is a thin client of this app (in-process by
default, remote with --server).
"""

from __future__ import annotations

import math

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, ConfigDict, Field

from . import __version__
from .config import ArmConfig, ConfigError, ExperimentConfig, _normalize_arm
from .experiments import compare_policies, run_verification
from .index import build_ingredients, index_from_ingredients
from .model import ModelError, clean_belief

app = FastAPI(title="pobandit", version=__version__)


class IndexRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    arm: ArmConfig
    belief: list[float]
    discount: float = Field(gt=0.0, lt=1.0)
    l_max: int = Field(default=500, ge=1)
    method: str = "auto"


class IndexResponse(BaseModel):
    value: float
    denominator: float
    fallback_used: bool
    threshold_reward: float
    crossing_rows: list[int | None]
    crossing_drift: int | None
    f_rows: list[float]
    f_drift: float
    g_rows: list[list[float]]
    g_drift: list[float]
    condition_number: float
    reward_shift: float
    state_relabeling: list[int] | None


class CompareRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    config: ExperimentConfig
    machine: str | None = None
    seed: int | None = None
    runs: int | None = None
    select_count: int | None = None
    policies: list[str] | None = None
    horizon: int | None = None


class CompareResponse(BaseModel):
    machine: str
    csv: str
    companion_csv: str
    summary: dict


class VerifyRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    size: float = Field(default=1.0, ge=0.0)
    seed: int = 0
    corrupt_analytic: bool = False  # negative-control hook for the suites


class CheckModel(BaseModel):
    name: str
    total: int
    failures: int
    excluded: int
    passed: bool
    line: str


class VerifyResponse(BaseModel):
    all_passed: bool
    warning: str
    checks: list[CheckModel]


def _crossing_to_json(value: float) -> int | None:
    return None if math.isinf(value) else int(value)


@app.get("/health")
def health() -> dict:
    return {"status": "ok", "version": __version__}


@app.post("/index", response_model=IndexResponse)
def index_endpoint(request: IndexRequest) -> IndexResponse:
    try:
        arm, shift, relabeling = _normalize_arm(request.arm, machine="<request>")
        belief = clean_belief(request.belief)
        if relabeling is not None:
            belief = belief[list(relabeling)]
        ingredients = build_ingredients(
            arm, belief, request.discount, request.l_max, request.method
        )
        result = index_from_ingredients(arm, belief, ingredients)
    except (ConfigError, ModelError, ValueError) as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc
    return IndexResponse(
        value=result.value,
        denominator=result.denominator,
        fallback_used=result.fallback_used,
        threshold_reward=ingredients.threshold_reward,
        crossing_rows=[_crossing_to_json(c) for c in ingredients.crossing_rows],
        crossing_drift=_crossing_to_json(ingredients.crossing_drift),
        f_rows=[float(x) for x in ingredients.f_rows],
        f_drift=ingredients.f_drift,
        g_rows=[[float(x) for x in row] for row in ingredients.g_rows],
        g_drift=[float(x) for x in ingredients.g_drift],
        condition_number=ingredients.condition_number,
        reward_shift=shift,
        state_relabeling=list(relabeling) if relabeling is not None else None,
    )


@app.post("/compare", response_model=CompareResponse)
def compare_endpoint(request: CompareRequest) -> CompareResponse:
    try:
        outcome = compare_policies(
            request.config,
            machine=request.machine,
            seed=request.seed,
            runs=request.runs,
            select_count=request.select_count,
            policies=request.policies,
            horizon=request.horizon,
        )
    except (ConfigError, ModelError, ValueError) as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc
    return CompareResponse(
        machine=outcome.machine_name,
        csv=outcome.csv_text,
        companion_csv=outcome.companion_text,
        summary=outcome.summary,
    )


@app.post("/verify", response_model=VerifyResponse)
def verify_endpoint(request: VerifyRequest) -> VerifyResponse:
    report = run_verification(
        size=request.size, seed=request.seed, corrupt_analytic=request.corrupt_analytic
    )
    return VerifyResponse(
        all_passed=report.all_passed,
        warning=report.warning,
        checks=[
            CheckModel(
                name=c.name,
                total=c.total,
                failures=c.failures,
                excluded=c.excluded,
                passed=c.passed,
                line=c.line(),
            )
            for c in report.checks
        ],
    )
