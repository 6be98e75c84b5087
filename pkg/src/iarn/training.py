"""MSE loss, Adam with coupled L2 weight decay, and the training loop.

Training follows a fixed protocol: seeded shuffle each epoch, batch-mean
gradients, one Adam step per batch including the trailing partial batch.
Weight decay is added to the gradient before the moment updates (classic
Adam + L2) and skips biases.  Everything is deterministic given the data
and the two seeds (parameter init, shuffle order).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .data import WindowedDataset
from .errors import ConfigError, DimensionError, NumericError
from .model import (
    IarnParams,
    ModelConfig,
    backward_windows,
    forward_windows,
    init_params,
    params_from_vector,
)

__all__ = ["TrainConfig", "AdamState", "TrainHistory", "mse_loss", "adam_step", "train"]


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    weight_decay: float = 0.0005
    epochs: int = 100
    batch_size: int = 128
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ConfigError(
                f"beta1 and beta2 must lie in (0, 1), got {self.beta1}, {self.beta2}"
            )
        if self.epsilon <= 0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass
class AdamState:
    """First/second moment accumulators plus the step counter."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, size: int) -> "AdamState":
        return cls(m=np.zeros(size), v=np.zeros(size), t=0)


@dataclass
class TrainHistory:
    """Per-epoch loss curve; validation entries stay None when unused."""

    train_loss: list[float] = field(default_factory=list)
    val_loss: list[Optional[float]] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)

    def to_csv(self) -> str:
        lines = ["epoch,train_loss,val_loss,seconds"]
        rows = zip(self.train_loss, self.val_loss, self.seconds)
        for epoch, (tl, vl, sec) in enumerate(rows, 1):
            vl_text = "" if vl is None else repr(vl)
            lines.append(f"{epoch},{tl!r},{vl_text},{sec!r}")
        return "\n".join(lines) + "\n"


def mse_loss(preds: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared error and its gradient w.r.t. the predictions."""
    preds = np.asarray(preds, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if preds.shape != targets.shape or preds.ndim != 1:
        raise DimensionError(
            f"predictions {preds.shape} and targets {targets.shape} must be "
            "equal-length vectors"
        )
    if preds.size == 0:
        raise DimensionError("loss is undefined for empty vectors")
    diff = preds - targets
    loss = float(diff @ diff) / preds.size
    grad = (2.0 / preds.size) * diff
    return loss, grad


def adam_step(
    params: np.ndarray,
    grads: np.ndarray,
    state: AdamState,
    cfg: TrainConfig,
    decay_mask: Optional[np.ndarray] = None,
    layout: Optional[list[tuple[str, int, int]]] = None,
) -> tuple[np.ndarray, AdamState]:
    """One Adam update on flat parameter/gradient vectors.

    ``decay_mask`` marks which entries receive weight decay (all of them
    when omitted); ``layout`` lets error messages name the offending
    parameter instead of a flat index.
    """
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape:
        raise DimensionError(
            f"params {params.shape} and grads {grads.shape} must match"
        )
    bad = ~np.isfinite(grads)
    if bad.any():
        idx = int(np.argmax(bad))
        where = f"flat index {idx}"
        if layout is not None:
            for name, start, stop in layout:
                if start <= idx < stop:
                    where = f"parameter '{name}' (offset {idx - start})"
                    break
        raise NumericError(f"non-finite gradient at {where}; step aborted")

    g = grads
    if cfg.weight_decay != 0.0:
        decayed = params if decay_mask is None else params * decay_mask
        g = g + cfg.weight_decay * decayed
    m = cfg.beta1 * state.m + (1 - cfg.beta1) * g
    v = cfg.beta2 * state.v + (1 - cfg.beta2) * g * g
    t = state.t + 1
    m_hat = m / (1 - cfg.beta1 ** t)
    v_hat = v / (1 - cfg.beta2 ** t)
    new_params = params - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.epsilon)
    return new_params, AdamState(m=m, v=v, t=t)


def _epoch_batches(n: int, batch_size: int, order: np.ndarray):
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def _dataset_loss(params: IarnParams, dataset: WindowedDataset, batch_size: int) -> float:
    total = 0.0
    n = len(dataset.targets)
    for start in range(0, n, batch_size):
        sl = slice(start, start + batch_size)
        preds, _ = forward_windows(dataset.inputs[sl], params)
        diff = preds - dataset.targets[sl]
        total += float(diff @ diff)
    return total / n


def train(
    dataset: WindowedDataset,
    mcfg: ModelConfig,
    tcfg: TrainConfig,
    val_dataset: Optional[WindowedDataset] = None,
) -> tuple[IarnParams, TrainHistory]:
    """Mini-batch training; returns final parameters and the loss history."""
    n = len(dataset.targets)
    if n == 0:
        raise ConfigError("training dataset is empty")
    if dataset.window_len != mcfg.window_len:
        raise ConfigError(
            f"dataset window {dataset.window_len} does not match model "
            f"window {mcfg.window_len}"
        )
    params = init_params(mcfg)
    vec = params.to_vector()
    layout = params.vector_layout()
    mask = params.decay_mask()
    state = AdamState.zeros(vec.size)
    rng = np.random.default_rng(tcfg.seed)
    history = TrainHistory()

    for epoch in range(tcfg.epochs):
        started = time.perf_counter()
        order = rng.permutation(n)
        sq_err_sum = 0.0
        for batch_idx, batch in enumerate(_epoch_batches(n, tcfg.batch_size, order)):
            preds, cache = forward_windows(dataset.inputs[batch], params)
            loss, grad_preds = mse_loss(preds, dataset.targets[batch])
            if not np.isfinite(loss):
                raise NumericError(
                    f"non-finite loss at epoch {epoch} batch {batch_idx}"
                )
            sq_err_sum += loss * batch.size
            grads = backward_windows(grad_preds, cache)
            vec, state = adam_step(
                vec, grads.to_vector(), state, tcfg, decay_mask=mask, layout=layout
            )
            params = params_from_vector(vec, mcfg)
        history.train_loss.append(sq_err_sum / n)
        if val_dataset is not None and len(val_dataset.targets) > 0:
            history.val_loss.append(_dataset_loss(params, val_dataset, tcfg.batch_size))
        else:
            history.val_loss.append(None)
        history.seconds.append(time.perf_counter() - started)
    return params, history
