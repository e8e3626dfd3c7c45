"""Pydantic request/response models for the service endpoints."""

from __future__ import annotations

from typing import Any, Optional

from pydantic import BaseModel, ConfigDict, Field


class RunConfigModel(BaseModel):
    """Mirror of the JSON run config; unset fields take package defaults."""

    model_config = ConfigDict(extra="forbid")

    records: Optional[str] = None
    artifacts_dir: Optional[str] = None
    reports_dir: Optional[str] = None
    methods: Optional[list[str]] = None
    seed: Optional[int] = None
    k_folds: Optional[int] = None
    n_bins: Optional[int] = None
    entbin_mode: Optional[str] = None
    cost_ratio: Optional[float] = None
    auc_uppers: Optional[list[float]] = None
    rate_match_points: Optional[list[float]] = None
    sweep_fractions: Optional[list[float]] = None
    bootstrap: Optional[dict[str, Any]] = None
    proxy: Optional[dict[str, Any]] = None
    forest: Optional[dict[str, Any]] = None
    proxy_forest: Optional[dict[str, Any]] = None
    world: Optional[dict[str, Any]] = None

    def to_config_dict(self) -> dict:
        return {k: v for k, v in self.model_dump().items() if v is not None}


class ConfigRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    config: RunConfigModel = Field(default_factory=RunConfigModel)


class DecideRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    config: RunConfigModel = Field(default_factory=RunConfigModel)
    record: dict[str, Any]
    method: str = "bidir"
    threshold: float = 0.5


class HealthResponse(BaseModel):
    status: str
    version: str


class GenResponse(BaseModel):
    records: str
    n: int
    small_accuracy: float
    large_accuracy: float


class ValidateResponse(BaseModel):
    ok: bool
    records: str
    n: int
    n_labels: int
    n_layers: int
    embedding_dim: Optional[int]
    with_large_outputs: int


class TrainProxyResponse(BaseModel):
    artifact: str
    n_train: int
    target_mode: str
    train_mse: float


class MethodArtifacts(BaseModel):
    scores: str
    scorer: str
    degenerate_folds: list[int]


class TrainDeferralResponse(BaseModel):
    methods: dict[str, MethodArtifacts]


class CurveEndpoints(BaseModel):
    accuracy_at_0: float
    accuracy_at_1: float


class CurvesResponse(BaseModel):
    files: list[str]
    endpoints: dict[str, CurveEndpoints]


class ReportResponse(BaseModel):
    files: list[str]
    report: str


class SweepResponse(BaseModel):
    rows: list[dict[str, Any]]
    file: str


class DecideResponse(BaseModel):
    id: str
    method: str
    score: float
    threshold: float
    deferred: bool
    stage: int
    prediction: Optional[int]
