"""Attention-residual convolutional forecaster for univariate flow data."""

from .data import (
    Scaler,
    SeriesRecord,
    WindowedDataset,
    fit_scaler,
    make_windows,
    parse_csv,
    scale,
    split_series,
    synth_series,
    unscale,
    write_csv,
)
from .metrics import MetricsReport, evaluate
from .model import (
    IarnParams,
    ModelConfig,
    init_params,
    iarn_forward,
    iarn_backward,
    load_model,
    save_model,
)
from .tensor import ConvParams, TensorCL, grad_check
from .training import AdamState, TrainConfig, TrainHistory, adam_step, mse_loss, train

__version__ = "0.1.0"
