"""FastAPI service wrapping the forecasting package.

Models travel as the same JSON documents the CLI writes to disk, so a
file trained on the command line can be posted straight to /predict or
/evaluate, and a /train response body can be saved as a model file.
"""

from __future__ import annotations

import math

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..data import SeriesRecord
from ..errors import IarnError, NumericError, ParseError
from ..metrics import MetricsReport
from ..model import ModelConfig, params_from_document, params_to_document
from ..pipeline import (
    evaluate_on_records,
    full_network_grad_check,
    predict_ahead,
    train_on_records,
)
from ..data import synth_series
from ..training import TrainConfig
from .schemas import (
    EvaluateRequest,
    EvaluateResponse,
    GradCheckRequest,
    GradCheckResponse,
    HealthResponse,
    HistoryRow,
    MetricsBody,
    PredictionPoint,
    PredictRequest,
    PredictResponse,
    SeriesPoint,
    SeriesResponse,
    SynthRequest,
    TrainRequest,
    TrainResponse,
)

app = FastAPI(title="iarn", version=__version__)


@app.exception_handler(IarnError)
async def iarn_error_handler(request: Request, exc: IarnError):
    status = 500 if isinstance(exc, NumericError) else 400
    return JSONResponse(status_code=status, content={"detail": str(exc)})


def _to_records(points: list[SeriesPoint]) -> list[SeriesRecord]:
    records = [SeriesRecord(timestamp=p.timestamp, value=p.value) for p in points]
    for rec in records:
        if not math.isfinite(rec.value):
            raise ParseError(f"non-finite value at {rec.timestamp.isoformat()}")
    records.sort(key=lambda r: r.timestamp)
    for prev, cur in zip(records, records[1:]):
        if prev.timestamp == cur.timestamp:
            raise ParseError(f"duplicate timestamp {prev.timestamp.isoformat()}")
    return records


def _metrics_body(report: MetricsReport) -> MetricsBody:
    return MetricsBody(
        rmse=report.rmse,
        mae=report.mae,
        mape_percent=report.mape_percent,
        evs=report.evs,
        rmse_normalized=report.rmse_normalized,
        mae_normalized=report.mae_normalized,
        n=report.n,
    )


@app.get("/health", response_model=HealthResponse)
def health() -> HealthResponse:
    return HealthResponse(status="ok", version=__version__)


@app.post("/synth", response_model=SeriesResponse)
def synth(req: SynthRequest) -> SeriesResponse:
    records = synth_series(req.kind, req.n, req.noise_sigma, req.seed)
    return SeriesResponse(
        records=[SeriesPoint(timestamp=r.timestamp, value=r.value) for r in records]
    )


@app.post("/train", response_model=TrainResponse)
def train_endpoint(req: TrainRequest) -> TrainResponse:
    records = _to_records(req.records)
    mcfg = ModelConfig(**req.model_settings.model_dump())
    tcfg = TrainConfig(**req.training.model_dump())
    result = train_on_records(records, mcfg, tcfg, train_fraction=req.train_fraction)
    history = [
        HistoryRow(epoch=i, train_loss=tl, val_loss=vl, seconds=sec)
        for i, (tl, vl, sec) in enumerate(
            zip(result.history.train_loss, result.history.val_loss,
                result.history.seconds),
            1,
        )
    ]
    return TrainResponse(
        model_document=params_to_document(result.params, result.config, result.scaler),
        history=history,
        final_train_loss=result.history.train_loss[-1],
    )


@app.post("/predict", response_model=PredictResponse)
def predict_endpoint(req: PredictRequest) -> PredictResponse:
    params, config, scaler = params_from_document(req.model_document)
    records = _to_records(req.records)
    values = predict_ahead(params, config, scaler, records, steps=req.steps)
    return PredictResponse(predictions=values)


@app.post("/evaluate", response_model=EvaluateResponse)
def evaluate_endpoint(req: EvaluateRequest) -> EvaluateResponse:
    params, config, scaler = params_from_document(req.model_document)
    records = _to_records(req.records)
    report, rows = evaluate_on_records(
        params, config, scaler, records, train_fraction=req.split
    )
    return EvaluateResponse(
        metrics=_metrics_body(report),
        predictions=[
            PredictionPoint(
                timestamp=row.timestamp, actual=row.actual, predicted=row.predicted
            )
            for row in rows
        ],
    )


@app.post("/gradcheck", response_model=GradCheckResponse)
def gradcheck_endpoint(req: GradCheckRequest) -> GradCheckResponse:
    error = full_network_grad_check(seed=req.seed)
    return GradCheckResponse(max_relative_error=error, passed=error < req.threshold)
