"""FastAPI service wrapping the pipeline.

Error mapping: UsageError -> 400, DataError -> 422, anything else -> 500,
always with a body {"detail": {"kind": ..., "message": ...}} that the CLI
translates back into exit codes.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__, pipeline
from ..config import RunConfig, config_from_dict
from ..errors import DataError, UsageError
from .schemas import (
    ConfigRequest,
    CurvesResponse,
    DecideRequest,
    DecideResponse,
    GenResponse,
    HealthResponse,
    ReportResponse,
    SweepResponse,
    TrainDeferralResponse,
    TrainProxyResponse,
    ValidateResponse,
)

app = FastAPI(
    title="cascadekit",
    version=__version__,
    description="Cascade deferral: train, score, evaluate, and route.",
)


@app.exception_handler(UsageError)
async def usage_error_handler(request: Request, exc: UsageError):
    return JSONResponse(status_code=400, content={"detail": {"kind": "usage", "message": str(exc)}})


@app.exception_handler(DataError)
async def data_error_handler(request: Request, exc: DataError):
    return JSONResponse(status_code=422, content={"detail": {"kind": "data", "message": str(exc)}})


@app.exception_handler(Exception)
async def internal_error_handler(request: Request, exc: Exception):
    return JSONResponse(
        status_code=500,
        content={"detail": {"kind": "internal", "message": f"{type(exc).__name__}: {exc}"}},
    )


def _config(req_config) -> RunConfig:
    return config_from_dict(req_config.to_config_dict())


@app.get("/v1/health", response_model=HealthResponse)
async def health() -> HealthResponse:
    return HealthResponse(status="ok", version=__version__)


@app.post("/v1/gen", response_model=GenResponse)
async def gen(req: ConfigRequest) -> GenResponse:
    return GenResponse(**pipeline.op_gen(_config(req.config)))


@app.post("/v1/validate", response_model=ValidateResponse)
async def validate(req: ConfigRequest) -> ValidateResponse:
    return ValidateResponse(**pipeline.op_validate(_config(req.config)))


@app.post("/v1/train-proxy", response_model=TrainProxyResponse)
async def train_proxy(req: ConfigRequest) -> TrainProxyResponse:
    return TrainProxyResponse(**pipeline.op_train_proxy(_config(req.config)))


@app.post("/v1/train-deferral", response_model=TrainDeferralResponse)
async def train_deferral(req: ConfigRequest) -> TrainDeferralResponse:
    return TrainDeferralResponse(**pipeline.op_train_deferral(_config(req.config)))


@app.post("/v1/curves", response_model=CurvesResponse)
async def curves(req: ConfigRequest) -> CurvesResponse:
    return CurvesResponse(**pipeline.op_curves(_config(req.config)))


@app.post("/v1/report", response_model=ReportResponse)
async def report(req: ConfigRequest) -> ReportResponse:
    return ReportResponse(**pipeline.op_report(_config(req.config)))


@app.post("/v1/sweep", response_model=SweepResponse)
async def sweep(req: ConfigRequest) -> SweepResponse:
    return SweepResponse(**pipeline.op_sweep(_config(req.config)))


@app.post("/v1/decide", response_model=DecideResponse)
async def decide(req: DecideRequest) -> DecideResponse:
    return DecideResponse(
        **pipeline.op_decide(_config(req.config), req.record, req.method, req.threshold)
    )
