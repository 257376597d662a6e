"""HTTP front end: batch run commands plus stateful online-estimation sessions.

Run endpoints return the same ``{filename: text}`` bundle the CLI writes to
disk, so a thin client and a local run produce identical bytes.
"""
from __future__ import annotations

import threading
import uuid
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import JSONResponse
from pydantic import ValidationError

from .. import runs
from ..config import EstimatorParams
from ..errors import OrderingError, RadioMapError
from ..io import parse_measurements_csv
from ..kernels import Measurement, Position
from .schemas import (
    MeasurementBatch,
    ObserveResponse,
    QueryRequest,
    QueryResponse,
    RunRequest,
    RunResponse,
    SessionCreate,
    SessionInfo,
    StepOut,
)


@dataclass
class _Session:
    id: str
    estimator_name: str
    estimator: object
    n_observed: int = 0
    last_time: int | None = None
    lock: threading.Lock = field(default_factory=threading.Lock)

    def info(self) -> SessionInfo:
        d = getattr(self.estimator, "dictionary", None)
        if d is None and hasattr(self.estimator, "f"):
            d = self.estimator.f.dictionary
        return SessionInfo(
            session_id=self.id,
            estimator=self.estimator_name,
            n_observed=self.n_observed,
            last_time_index=self.last_time,
            dict_size=None if d is None else len(d),
        )


def _run(command: str, req: RunRequest) -> RunResponse:
    stream = parse_measurements_csv(req.measurements_csv) if req.measurements_csv is not None else None
    fn = runs.COMMANDS[command]
    files = fn(req.config, stream) if command in ("reconstruct", "evaluate") else fn(req.config)
    return RunResponse(command=command, files=files)


def create_app() -> FastAPI:
    app = FastAPI(title="radiomap", version="0.1.0")
    sessions: dict[str, _Session] = {}
    registry_lock = threading.Lock()

    @app.exception_handler(OrderingError)
    async def _ordering(_: Request, exc: OrderingError):
        return JSONResponse(status_code=409, content={"error": type(exc).__name__, "detail": str(exc)})

    @app.exception_handler(RadioMapError)
    async def _domain(_: Request, exc: RadioMapError):
        return JSONResponse(status_code=400, content={"error": type(exc).__name__, "detail": str(exc)})

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.post("/simulate", response_model=RunResponse)
    def simulate(req: RunRequest):
        return _run("simulate", req)

    @app.post("/reconstruct", response_model=RunResponse)
    def reconstruct(req: RunRequest):
        return _run("reconstruct", req)

    @app.post("/evaluate", response_model=RunResponse)
    def evaluate(req: RunRequest):
        return _run("evaluate", req)

    @app.post("/sweep", response_model=RunResponse)
    def sweep(req: RunRequest):
        return _run("sweep", req)

    def _get(session_id: str) -> _Session:
        with registry_lock:
            s = sessions.get(session_id)
        if s is None:
            raise HTTPException(status_code=404, detail=f"no session {session_id}")
        return s

    @app.post("/sessions", response_model=SessionInfo, status_code=201)
    def create_session(req: SessionCreate):
        try:
            params = EstimatorParams.model_validate({req.estimator: req.params})
        except ValidationError as exc:
            raise HTTPException(status_code=422, detail=exc.errors(include_url=False, include_context=False))
        est = getattr(params, req.estimator).build()
        s = _Session(uuid.uuid4().hex, req.estimator, est)
        with registry_lock:
            sessions[s.id] = s
        return s.info()

    @app.get("/sessions/{session_id}", response_model=SessionInfo)
    def get_session(session_id: str):
        return _get(session_id).info()

    @app.delete("/sessions/{session_id}", status_code=204)
    def delete_session(session_id: str):
        with registry_lock:
            if sessions.pop(session_id, None) is None:
                raise HTTPException(status_code=404, detail=f"no session {session_id}")

    @app.post("/sessions/{session_id}/measurements", response_model=ObserveResponse)
    def observe(session_id: str, batch: MeasurementBatch):
        s = _get(session_id)
        ms = [Measurement(Position(m.x, m.y), m.path_loss_db, m.time_index) for m in batch.measurements]
        steps = []
        with s.lock:
            # reject the whole batch before touching state if it is out of order
            times = [m.time_index for m in ms]
            prev = s.last_time
            for t in times:
                if prev is not None and t <= prev:
                    raise OrderingError(f"measurement time {t} after {prev}")
                prev = t
            for m in ms:
                d = s.estimator.observe(m)
                s.n_observed += 1
                s.last_time = m.time_index
                if d is not None:
                    steps.append(StepOut(**{k: getattr(d, k) for k in StepOut.model_fields if hasattr(d, k)}))
            return ObserveResponse(session=s.info(), steps=steps)

    @app.post("/sessions/{session_id}/query", response_model=QueryResponse)
    def query(session_id: str, req: QueryRequest):
        s = _get(session_id)
        with s.lock:
            snap = s.estimator.snapshot()
        vals = np.maximum(snap.predict(np.asarray(req.points, dtype=float)), 0.0)
        return QueryResponse(estimates_db=[float(v) for v in vals])

    return app


app = create_app()
