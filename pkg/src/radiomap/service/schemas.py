"""Request and response bodies of the HTTP service."""
from __future__ import annotations

from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field

from ..config import RunConfig, U64_MAX


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class RunRequest(_Strict):
    """A run config with the scenario inlined, plus an optional measurement CSV body."""

    config: RunConfig
    measurements_csv: str | None = None


class RunResponse(BaseModel):
    command: str
    files: dict[str, str]


class SessionCreate(_Strict):
    estimator: Literal["apsm", "multikernel", "idw", "nn"] = "multikernel"
    params: dict[str, Any] = Field(default_factory=dict)


class SessionInfo(BaseModel):
    session_id: str
    estimator: str
    n_observed: int
    last_time_index: int | None
    dict_size: int | None


class MeasurementIn(_Strict):
    time_index: int = Field(ge=0, le=U64_MAX)
    x: float
    y: float
    path_loss_db: float = Field(ge=0)


class MeasurementBatch(_Strict):
    measurements: list[MeasurementIn] = Field(min_length=1)


class StepOut(BaseModel):
    step: int
    residual_before: float
    residual_after: float
    dict_size: int
    zero_row_count: int | None = None
    zero_col_count: int | None = None


class ObserveResponse(BaseModel):
    session: SessionInfo
    steps: list[StepOut]


class QueryRequest(_Strict):
    points: list[tuple[float, float]] = Field(min_length=1)


class QueryResponse(BaseModel):
    estimates_db: list[float]


class ErrorResponse(BaseModel):
    error: str
    detail: str
