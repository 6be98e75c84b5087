"""Pydantic request/response models for the HTTP service."""

from __future__ import annotations

from typing import Optional

from pydantic import AwareDatetime, BaseModel, Field


class SeriesPoint(BaseModel):
    timestamp: AwareDatetime
    value: float


class HealthResponse(BaseModel):
    status: str
    version: str


class SynthRequest(BaseModel):
    kind: str
    n: int = 2000
    noise_sigma: float = 0.0
    seed: int = 0


class SeriesResponse(BaseModel):
    records: list[SeriesPoint]


class ModelSettings(BaseModel):
    window_len: int = 30
    hidden_channels: int = 32
    kernel_size: int = 3
    num_blocks: int = 5
    seed: int = 0


class TrainingSettings(BaseModel):
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    weight_decay: float = 0.0005
    epochs: int = 100
    batch_size: int = 128
    seed: int = 0


class TrainRequest(BaseModel):
    records: list[SeriesPoint]
    model_settings: ModelSettings = Field(default_factory=ModelSettings)
    training: TrainingSettings = Field(default_factory=TrainingSettings)
    train_fraction: float = 0.8


class HistoryRow(BaseModel):
    epoch: int
    train_loss: float
    val_loss: Optional[float] = None
    seconds: float


class TrainResponse(BaseModel):
    model_document: dict
    history: list[HistoryRow]
    final_train_loss: float


class PredictRequest(BaseModel):
    model_document: dict
    records: list[SeriesPoint]
    steps: int = 1


class PredictResponse(BaseModel):
    predictions: list[float]


class MetricsBody(BaseModel):
    rmse: float
    mae: float
    mape_percent: float
    evs: float
    rmse_normalized: float
    mae_normalized: float
    n: int


class PredictionPoint(BaseModel):
    timestamp: AwareDatetime
    actual: float
    predicted: float


class EvaluateRequest(BaseModel):
    model_document: dict
    records: list[SeriesPoint]
    split: float = 0.8


class EvaluateResponse(BaseModel):
    metrics: MetricsBody
    predictions: list[PredictionPoint]


class GradCheckRequest(BaseModel):
    seed: int = 0
    threshold: float = 1e-4


class GradCheckResponse(BaseModel):
    max_relative_error: float
    passed: bool
