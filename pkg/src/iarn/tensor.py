"""Channels-by-length tensors and the layer primitives built on them.

Every layer comes as a forward/backward pair with hand-derived
gradients; there is no autodiff graph.  The heavy lifting happens in
batched kernels that take raw ``(batch, channels, length)`` float64
arrays, so a mini-batch is one BLAS-backed pass.  The single-sample
API wraps those kernels with a batch of one.

Convolution is cross-correlation (no kernel flip) with symmetric zero
padding of (k-1)/2 per side, so the output length always equals the
input length.  Softmax normalizes each channel row over the length
axis with max-subtraction for overflow safety.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError, NumericError

__all__ = [
    "TensorCL",
    "ConvParams",
    "ConvGrads",
    "conv1d_forward",
    "conv1d_backward",
    "relu_forward",
    "relu_backward",
    "softmax_length_forward",
    "softmax_length_backward",
    "affine_forward",
    "affine_backward",
    "grad_check",
]


def _as_float_array(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{name} contains non-finite values")
    return arr


@dataclass(frozen=True)
class TensorCL:
    """Dense rank-2 array, channels x length, float64, all values finite."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 2:
            raise DimensionError(f"expected 2-D channels x length data, got ndim={arr.ndim}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DimensionError(f"channels and length must be positive, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise NumericError("tensor contains non-finite values")
        object.__setattr__(self, "data", arr)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def length(self) -> int:
        return self.data.shape[1]

    @classmethod
    def from_rows(cls, rows) -> "TensorCL":
        return cls(np.atleast_2d(np.asarray(rows, dtype=np.float64)))


@dataclass(frozen=True)
class ConvParams:
    """1-D convolution weights [out, in, k] and per-channel bias [out]."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        w = _as_float_array(self.weights, "weights")
        b = _as_float_array(self.bias, "bias")
        if w.ndim != 3:
            raise DimensionError(f"weights must be [out, in, k], got ndim={w.ndim}")
        if w.shape[2] % 2 == 0:
            raise ConfigError(f"kernel size must be odd, got {w.shape[2]}")
        if b.shape != (w.shape[0],):
            raise DimensionError(
                f"bias shape {b.shape} does not match out_channels {w.shape[0]}"
            )
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def out_channels(self) -> int:
        return self.weights.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weights.shape[1]

    @property
    def kernel_size(self) -> int:
        return self.weights.shape[2]


@dataclass(frozen=True)
class ConvGrads:
    """Partial derivatives for one ConvParams, same shapes."""

    weights: np.ndarray
    bias: np.ndarray


# ---------------------------------------------------------------------------
# Batched kernels on raw (C, B, L) channel-first arrays.  These are the only
# places the layer math is written down; everything else delegates here.
# The im2col matrix built by the forward pass is cached so the backward pass
# reuses it for the weight gradient instead of rebuilding it.
# ---------------------------------------------------------------------------

@dataclass
class ConvCtx:
    """Forward-pass byproducts a conv backward needs."""

    col: np.ndarray  # (C_in * k, B * L) im2col matrix
    batch: int
    length: int


def _im2col(x: np.ndarray, k: int) -> np.ndarray:
    """Stack the k kernel taps of (C, B, L) into a (C*k, B*L) matrix."""
    c, batch, length = x.shape
    if k == 1:
        return np.reshape(x, (c, batch * length))
    pad = (k - 1) // 2
    xpad = np.pad(x, ((0, 0), (0, 0), (pad, pad)))
    win = np.lib.stride_tricks.sliding_window_view(xpad, k, axis=2)  # (C,B,L,k)
    return win.transpose(0, 3, 1, 2).reshape(c * k, batch * length)


def conv1d_batch_cached(
    x: np.ndarray, params: ConvParams
) -> tuple[np.ndarray, ConvCtx]:
    """Cross-correlate (C_in, B, L) -> (C_out, B, L) with same padding."""
    if x.shape[0] != params.in_channels:
        raise DimensionError(
            f"input has {x.shape[0]} channels, conv expects {params.in_channels}"
        )
    _, batch, length = x.shape
    k = params.kernel_size
    col = _im2col(x, k)
    out = params.weights.reshape(params.out_channels, -1) @ col
    out = out.reshape(params.out_channels, batch, length)
    out += params.bias[:, None, None]
    return out, ConvCtx(col=col, batch=batch, length=length)


def conv1d_batch(x: np.ndarray, params: ConvParams) -> np.ndarray:
    return conv1d_batch_cached(x, params)[0]


def conv1d_batch_backward(
    grad_out: np.ndarray, ctx: ConvCtx, params: ConvParams
) -> tuple[np.ndarray, ConvGrads]:
    """Exact gradients of a scalar loss through conv1d_batch_cached."""
    c_out, c_in, k = params.weights.shape
    batch, length = ctx.batch, ctx.length
    if grad_out.shape != (c_out, batch, length):
        raise DimensionError(
            f"grad shape {grad_out.shape} does not match conv output "
            f"{(c_out, batch, length)}"
        )
    g2 = np.reshape(grad_out, (c_out, batch * length))
    grad_w = (g2 @ ctx.col.T).reshape(c_out, c_in, k)
    grad_b = g2.sum(axis=1)
    grad_col = (params.weights.reshape(c_out, -1).T @ g2).reshape(
        c_in, k, batch, length
    )
    if k == 1:
        grad_x = grad_col[:, 0]
    else:
        pad = (k - 1) // 2
        grad_xpad = np.zeros((c_in, batch, length + 2 * pad))
        for dk in range(k):
            grad_xpad[:, :, dk:dk + length] += grad_col[:, dk]
        grad_x = grad_xpad[:, :, pad:pad + length]
    return grad_x, ConvGrads(weights=grad_w, bias=grad_b)


def relu_batch(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_batch_backward(grad_out: np.ndarray, cached_x: np.ndarray) -> np.ndarray:
    # Subgradient 0 at exactly 0: pass gradient only where input was > 0.
    return np.where(cached_x > 0.0, grad_out, 0.0)


def softmax_length_batch(x: np.ndarray) -> np.ndarray:
    """Softmax over the last (length) axis, per channel row."""
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_length_batch_backward(
    grad_out: np.ndarray, cached_output: np.ndarray
) -> np.ndarray:
    # Per row: dx = s * (g - <g, s>), the exact softmax JVP.
    inner = (grad_out * cached_output).sum(axis=-1, keepdims=True)
    return cached_output * (grad_out - inner)


# ---------------------------------------------------------------------------
# Single-sample API on TensorCL.
# ---------------------------------------------------------------------------

def conv1d_forward(x: TensorCL, params: ConvParams) -> TensorCL:
    """Same-length 1-D convolution of one channels x length tensor."""
    return TensorCL(conv1d_batch(x.data[:, None, :], params)[:, 0, :])


def conv1d_backward(
    grad_out: TensorCL, cached_input: TensorCL, params: ConvParams
) -> tuple[TensorCL, ConvGrads]:
    x = cached_input.data[:, None, :]
    ctx = ConvCtx(col=_im2col(x, params.kernel_size), batch=1, length=x.shape[2])
    grad_x, grads = conv1d_batch_backward(grad_out.data[:, None, :], ctx, params)
    return TensorCL(grad_x[:, 0, :]), grads


def relu_forward(x: TensorCL) -> TensorCL:
    return TensorCL(relu_batch(x.data))


def relu_backward(grad_out: TensorCL, cached_x: TensorCL) -> TensorCL:
    if grad_out.data.shape != cached_x.data.shape:
        raise DimensionError("relu gradient shape does not match cached input")
    return TensorCL(relu_batch_backward(grad_out.data, cached_x.data))


def softmax_length_forward(x: TensorCL) -> TensorCL:
    return TensorCL(softmax_length_batch(x.data))


def softmax_length_backward(grad_out: TensorCL, cached_output: TensorCL) -> TensorCL:
    if grad_out.data.shape != cached_output.data.shape:
        raise DimensionError("softmax gradient shape does not match cached output")
    return TensorCL(softmax_length_batch_backward(grad_out.data, cached_output.data))


def affine_forward(x: np.ndarray, weights: np.ndarray, bias: float) -> float:
    """Dot product of two equal-length vectors plus a scalar bias."""
    x = np.asarray(x, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if x.shape != weights.shape or x.ndim != 1:
        raise DimensionError(
            f"affine expects equal-length vectors, got {x.shape} and {weights.shape}"
        )
    return float(x @ weights + bias)


def affine_backward(
    grad_out: float, cached_x: np.ndarray, weights: np.ndarray
) -> tuple[np.ndarray, np.ndarray, float]:
    """Gradients of the affine head w.r.t. input, weights and bias."""
    cached_x = np.asarray(cached_x, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if cached_x.shape != weights.shape:
        raise DimensionError("affine gradient shapes do not match")
    return grad_out * weights, grad_out * cached_x, float(grad_out)


# ---------------------------------------------------------------------------
# Finite-difference gradient checking.
# ---------------------------------------------------------------------------

def grad_check(f, params: np.ndarray, eps: float = 1e-5) -> float:
    """Compare analytic gradients against central finite differences.

    ``f(params)`` must return ``(value, grad)`` where ``grad`` has the
    same shape as ``params``.  Returns the maximum over parameters of
    ``|analytic - numeric| / max(1, |analytic|, |numeric|)``.
    """
    if eps <= 0:
        raise ConfigError(f"eps must be positive, got {eps}")
    params = np.asarray(params, dtype=np.float64)
    value, analytic = f(params)
    analytic = np.asarray(analytic, dtype=np.float64)
    if not np.isfinite(value) or not np.all(np.isfinite(analytic)):
        raise NumericError("function returned a non-finite value or gradient")
    if analytic.shape != params.shape:
        raise DimensionError(
            f"gradient shape {analytic.shape} does not match params {params.shape}"
        )
    worst = 0.0
    for i in range(params.size):
        shifted = params.copy()
        shifted.flat[i] += eps
        up, _ = f(shifted)
        shifted.flat[i] -= 2 * eps
        down, _ = f(shifted)
        if not (np.isfinite(up) and np.isfinite(down)):
            raise NumericError(f"non-finite evaluation while perturbing parameter {i}")
        numeric = (up - down) / (2 * eps)
        a = analytic.flat[i]
        err = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
        worst = max(worst, float(err))
    return worst
