"""The forecasting network: attention gate, residual stack, scalar head.

Architecture, front to back:

  window (W past values) -> 1 x W tensor
    -> attention gate:  y = conv(A); S = softmax(relu(y)); E = S * A + A
    -> residual blocks: o = relu(conv2(relu(conv1(x))) + shortcut(x))
       (block 0 widens 1 -> H channels through a 1x1 shortcut projection,
        later blocks keep H channels and use an identity shortcut)
    -> 1x1 conv H -> 1, then an affine map over the W positions -> scalar

Forward passes run batched over windows; the single-window functions
wrap the batched path with a batch of one, so there is exactly one
implementation of each gradient.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import (
    ConfigError,
    DimensionError,
    SchemaError,
    VersionError,
)
from .tensor import (
    ConvCtx,
    ConvGrads,
    ConvParams,
    TensorCL,
    conv1d_batch_backward,
    conv1d_batch_cached,
    relu_batch,
    relu_batch_backward,
    softmax_length_batch,
    softmax_length_batch_backward,
)

MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    window_len: int = 30
    hidden_channels: int = 32
    kernel_size: int = 3
    num_blocks: int = 5
    seed: int = 0

    def __post_init__(self):
        for name in ("window_len", "hidden_channels", "kernel_size", "num_blocks"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.kernel_size % 2 == 0:
            raise ConfigError(f"kernel_size must be odd, got {self.kernel_size}")
        if self.seed < 0:
            raise ConfigError(f"seed must be non-negative, got {self.seed}")


@dataclass(frozen=True)
class BlockParams:
    """Two convolutions plus an optional 1x1 shortcut projection.

    The shortcut is present exactly when the block changes channel
    count; with matching channels the skip path is the identity.
    """

    conv1: ConvParams
    conv2: ConvParams
    shortcut: Optional[ConvParams] = None


@dataclass(frozen=True)
class BlockGrads:
    conv1: ConvGrads
    conv2: ConvGrads
    shortcut: Optional[ConvGrads] = None


@dataclass(frozen=True)
class IarnParams:
    """Every learnable parameter of the network, in evaluation order."""

    attention_conv: ConvParams
    blocks: tuple[BlockParams, ...]
    head_conv: ConvParams
    head_weights: np.ndarray
    head_bias: float

    def vector_layout(self) -> list[tuple[str, int, int]]:
        """Fixed (name, start, stop) slices of the flat parameter vector."""
        layout = []
        pos = 0

        def add(name, size):
            nonlocal pos
            layout.append((name, pos, pos + size))
            pos += size

        add("attention_conv.weights", self.attention_conv.weights.size)
        add("attention_conv.bias", self.attention_conv.bias.size)
        for i, blk in enumerate(self.blocks):
            add(f"blocks[{i}].conv1.weights", blk.conv1.weights.size)
            add(f"blocks[{i}].conv1.bias", blk.conv1.bias.size)
            add(f"blocks[{i}].conv2.weights", blk.conv2.weights.size)
            add(f"blocks[{i}].conv2.bias", blk.conv2.bias.size)
            if blk.shortcut is not None:
                add(f"blocks[{i}].shortcut.weights", blk.shortcut.weights.size)
                add(f"blocks[{i}].shortcut.bias", blk.shortcut.bias.size)
        add("head_conv.weights", self.head_conv.weights.size)
        add("head_conv.bias", self.head_conv.bias.size)
        add("head_affine.weights", self.head_weights.size)
        add("head_affine.bias", 1)
        return layout

    def to_vector(self) -> np.ndarray:
        parts = [self.attention_conv.weights.ravel(), self.attention_conv.bias]
        for blk in self.blocks:
            parts += [blk.conv1.weights.ravel(), blk.conv1.bias,
                      blk.conv2.weights.ravel(), blk.conv2.bias]
            if blk.shortcut is not None:
                parts += [blk.shortcut.weights.ravel(), blk.shortcut.bias]
        parts += [self.head_conv.weights.ravel(), self.head_conv.bias,
                  self.head_weights, np.array([self.head_bias])]
        return np.concatenate(parts)

    def decay_mask(self) -> np.ndarray:
        """1.0 for weights, 0.0 for biases, aligned with to_vector()."""
        mask = np.zeros(self.to_vector().size)
        for name, start, stop in self.vector_layout():
            if name.endswith(".weights"):
                mask[start:stop] = 1.0
        return mask


@dataclass(frozen=True)
class IarnGrads:
    """Parameter gradients, shape-congruent with IarnParams."""

    attention_conv: ConvGrads
    blocks: tuple[BlockGrads, ...]
    head_conv: ConvGrads
    head_weights: np.ndarray
    head_bias: float

    def to_vector(self) -> np.ndarray:
        parts = [self.attention_conv.weights.ravel(), self.attention_conv.bias]
        for blk in self.blocks:
            parts += [blk.conv1.weights.ravel(), blk.conv1.bias,
                      blk.conv2.weights.ravel(), blk.conv2.bias]
            if blk.shortcut is not None:
                parts += [blk.shortcut.weights.ravel(), blk.shortcut.bias]
        parts += [self.head_conv.weights.ravel(), self.head_conv.bias,
                  self.head_weights, np.array([self.head_bias])]
        return np.concatenate(parts)


def _conv_shapes(config: ModelConfig) -> list[tuple[str, int, int, int]]:
    """(name, out, in, k) for every convolution, in evaluation order."""
    h, k = config.hidden_channels, config.kernel_size
    shapes = [("attention_conv", 1, 1, k)]
    for i in range(config.num_blocks):
        c_in = 1 if i == 0 else h
        shapes.append((f"blocks[{i}].conv1", h, c_in, k))
        shapes.append((f"blocks[{i}].conv2", h, h, k))
        if c_in != h:
            shapes.append((f"blocks[{i}].shortcut", h, c_in, 1))
    shapes.append(("head_conv", 1, h, 1))
    return shapes


def init_params(config: ModelConfig, seed: Optional[int] = None) -> IarnParams:
    """Deterministic fan-in-scaled uniform init; all biases zero.

    Conv weights are drawn uniformly from +-1/sqrt(in_channels * k); the
    affine head uses the same rule with fan-in = window_len.
    """
    rng = np.random.default_rng(config.seed if seed is None else seed)

    def make_conv(out_c, in_c, k):
        bound = 1.0 / np.sqrt(in_c * k)
        w = rng.uniform(-bound, bound, size=(out_c, in_c, k))
        return ConvParams(weights=w, bias=np.zeros(out_c))

    convs = {name: make_conv(o, i, k) for name, o, i, k in _conv_shapes(config)}
    blocks = []
    for i in range(config.num_blocks):
        blocks.append(BlockParams(
            conv1=convs[f"blocks[{i}].conv1"],
            conv2=convs[f"blocks[{i}].conv2"],
            shortcut=convs.get(f"blocks[{i}].shortcut"),
        ))
    head_bound = 1.0 / np.sqrt(config.window_len)
    head_w = rng.uniform(-head_bound, head_bound, size=config.window_len)
    return IarnParams(
        attention_conv=convs["attention_conv"],
        blocks=tuple(blocks),
        head_conv=convs["head_conv"],
        head_weights=head_w,
        head_bias=0.0,
    )


def params_from_vector(vec: np.ndarray, config: ModelConfig) -> IarnParams:
    """Rebuild structured parameters from a flat vector (to_vector order)."""
    vec = np.asarray(vec, dtype=np.float64)
    pos = 0

    def take(shape):
        nonlocal pos
        size = int(np.prod(shape))
        out = vec[pos:pos + size].reshape(shape).copy()
        pos += size
        return out

    def take_conv(out_c, in_c, k):
        return ConvParams(weights=take((out_c, in_c, k)), bias=take((out_c,)))

    # _conv_shapes yields convolutions in to_vector order, so sequential
    # take() calls consume the right slices.
    convs = {name: take_conv(o, i, k) for name, o, i, k in _conv_shapes(config)}
    blocks = tuple(
        BlockParams(
            conv1=convs[f"blocks[{i}].conv1"],
            conv2=convs[f"blocks[{i}].conv2"],
            shortcut=convs.get(f"blocks[{i}].shortcut"),
        )
        for i in range(config.num_blocks)
    )
    head_w = take((config.window_len,))
    head_b = float(take((1,))[0])
    if pos != vec.size:
        raise DimensionError(
            f"vector has {vec.size} entries, config expects {pos}"
        )
    return IarnParams(
        attention_conv=convs["attention_conv"],
        blocks=blocks,
        head_conv=convs["head_conv"],
        head_weights=head_w,
        head_bias=head_b,
    )


# ---------------------------------------------------------------------------
# Forward / backward.  Activations flow channel-first as (C, B, L); caches
# hold exactly the arrays each backward needs.
# ---------------------------------------------------------------------------

@dataclass
class AttentionCache:
    x: np.ndarray        # gate input (C, B, L)
    y: np.ndarray        # conv output, pre-ReLU
    smap: np.ndarray     # softmax attention map
    ctx: ConvCtx
    params: ConvParams


@dataclass
class BlockCache:
    h1: np.ndarray       # conv1 output, pre-ReLU
    z: np.ndarray        # conv2(r1) + shortcut(x), pre-ReLU
    ctx1: ConvCtx
    ctx2: ConvCtx
    ctx_short: Optional[ConvCtx]
    params: BlockParams


@dataclass
class ForwardCache:
    attention: AttentionCache
    blocks: list[BlockCache]
    ctx_head: ConvCtx
    features: np.ndarray  # head conv output, squeezed to (B, W)
    params: IarnParams


def attention_batch(x: np.ndarray, params: ConvParams) -> tuple[np.ndarray, AttentionCache]:
    if params.in_channels != params.out_channels:
        raise DimensionError("attention conv must preserve channel count")
    y, ctx = conv1d_batch_cached(x, params)
    smap = softmax_length_batch(relu_batch(y))
    out = smap * x + x
    return out, AttentionCache(x=x, y=y, smap=smap, ctx=ctx, params=params)


def attention_batch_backward(
    grad_out: np.ndarray, cache: AttentionCache
) -> tuple[np.ndarray, ConvGrads]:
    if grad_out.shape != cache.x.shape:
        raise DimensionError("attention gradient shape does not match forward")
    grad_smap = grad_out * cache.x
    grad_x = grad_out * (cache.smap + 1.0)
    grad_relu = softmax_length_batch_backward(grad_smap, cache.smap)
    grad_y = relu_batch_backward(grad_relu, cache.y)
    grad_x_conv, conv_grads = conv1d_batch_backward(grad_y, cache.ctx, cache.params)
    return grad_x + grad_x_conv, conv_grads


def residual_block_batch(x: np.ndarray, params: BlockParams) -> tuple[np.ndarray, BlockCache]:
    h1, ctx1 = conv1d_batch_cached(x, params.conv1)
    r1 = relu_batch(h1)
    h2, ctx2 = conv1d_batch_cached(r1, params.conv2)
    ctx_short = None
    if params.shortcut is not None:
        skip, ctx_short = conv1d_batch_cached(x, params.shortcut)
    else:
        if x.shape[0] != h2.shape[0]:
            raise DimensionError(
                f"identity shortcut needs matching channels, got {x.shape[0]} "
                f"and {h2.shape[0]}"
            )
        skip = x
    z = h2 + skip
    return relu_batch(z), BlockCache(
        h1=h1, z=z, ctx1=ctx1, ctx2=ctx2, ctx_short=ctx_short, params=params
    )


def residual_block_batch_backward(
    grad_out: np.ndarray, cache: BlockCache
) -> tuple[np.ndarray, BlockGrads]:
    if grad_out.shape != cache.z.shape:
        raise DimensionError("block gradient shape does not match forward")
    grad_z = relu_batch_backward(grad_out, cache.z)
    grad_r1, g_conv2 = conv1d_batch_backward(grad_z, cache.ctx2, cache.params.conv2)
    grad_h1 = relu_batch_backward(grad_r1, cache.h1)
    grad_x, g_conv1 = conv1d_batch_backward(grad_h1, cache.ctx1, cache.params.conv1)
    if cache.params.shortcut is not None:
        grad_x_skip, g_short = conv1d_batch_backward(
            grad_z, cache.ctx_short, cache.params.shortcut
        )
    else:
        grad_x_skip, g_short = grad_z, None
    return grad_x + grad_x_skip, BlockGrads(conv1=g_conv1, conv2=g_conv2, shortcut=g_short)


def forward_windows(windows: np.ndarray, params: IarnParams) -> tuple[np.ndarray, ForwardCache]:
    """Predict one step ahead for a batch of windows (B, W) -> (B,)."""
    windows = np.asarray(windows, dtype=np.float64)
    if windows.ndim != 2:
        raise DimensionError(f"expected (batch, window) input, got ndim={windows.ndim}")
    if windows.shape[1] != params.head_weights.size:
        raise DimensionError(
            f"window length {windows.shape[1]} does not match model "
            f"window {params.head_weights.size}"
        )
    x = windows[None, :, :]  # (1, B, W)
    x, att_cache = attention_batch(x, params.attention_conv)
    block_caches = []
    for blk in params.blocks:
        x, bc = residual_block_batch(x, blk)
        block_caches.append(bc)
    head_out, ctx_head = conv1d_batch_cached(x, params.head_conv)
    features = head_out[0]  # (B, W)
    preds = features @ params.head_weights + params.head_bias
    cache = ForwardCache(
        attention=att_cache,
        blocks=block_caches,
        ctx_head=ctx_head,
        features=features,
        params=params,
    )
    return preds, cache


def backward_windows(grad_preds: np.ndarray, cache: ForwardCache) -> IarnGrads:
    """Parameter gradients for a batch; grad_preds has one entry per window."""
    grad_preds = np.asarray(grad_preds, dtype=np.float64)
    if grad_preds.shape != (cache.features.shape[0],):
        raise DimensionError(
            f"expected {cache.features.shape[0]} prediction gradients, "
            f"got shape {grad_preds.shape}"
        )
    params = cache.params
    g_head_w = cache.features.T @ grad_preds
    g_head_b = float(grad_preds.sum())
    grad_features = grad_preds[:, None] * params.head_weights[None, :]
    grad_x, g_head_conv = conv1d_batch_backward(
        grad_features[None, :, :], cache.ctx_head, params.head_conv
    )
    block_grads: list[BlockGrads] = []
    for bc in reversed(cache.blocks):
        grad_x, bg = residual_block_batch_backward(grad_x, bc)
        block_grads.append(bg)
    block_grads.reverse()
    _, g_att = attention_batch_backward(grad_x, cache.attention)
    return IarnGrads(
        attention_conv=g_att,
        blocks=tuple(block_grads),
        head_conv=g_head_conv,
        head_weights=g_head_w,
        head_bias=g_head_b,
    )


# Single-sample wrappers ----------------------------------------------------

def attention_forward(a: TensorCL, params: ConvParams) -> tuple[TensorCL, AttentionCache]:
    if a.channels != params.in_channels:
        raise DimensionError(
            f"input has {a.channels} channels, attention conv expects "
            f"{params.in_channels}"
        )
    out, cache = attention_batch(a.data[:, None, :], params)
    return TensorCL(out[:, 0, :]), cache


def attention_backward(grad_e: TensorCL, cache: AttentionCache) -> tuple[TensorCL, ConvGrads]:
    grad_x, grads = attention_batch_backward(grad_e.data[:, None, :], cache)
    return TensorCL(grad_x[:, 0, :]), grads


def residual_block_forward(x: TensorCL, params: BlockParams) -> tuple[TensorCL, BlockCache]:
    out, cache = residual_block_batch(x.data[:, None, :], params)
    return TensorCL(out[:, 0, :]), cache


def residual_block_backward(grad_o: TensorCL, cache: BlockCache) -> tuple[TensorCL, BlockGrads]:
    grad_x, grads = residual_block_batch_backward(grad_o.data[:, None, :], cache)
    return TensorCL(grad_x[:, 0, :]), grads


def iarn_forward(window: np.ndarray, params: IarnParams) -> tuple[float, ForwardCache]:
    window = np.asarray(window, dtype=np.float64)
    if window.ndim != 1:
        raise DimensionError(f"window must be a flat vector, got ndim={window.ndim}")
    preds, cache = forward_windows(window[None, :], params)
    return float(preds[0]), cache


def iarn_backward(grad_pred: float, cache: ForwardCache) -> IarnGrads:
    return backward_windows(np.array([grad_pred]), cache)


# ---------------------------------------------------------------------------
# Persistence: one JSON document holding config, scaler and named arrays.
# ---------------------------------------------------------------------------

def _array_entry(arr: np.ndarray) -> dict:
    return {"shape": list(arr.shape), "data": arr.tolist()}


def params_to_document(params: IarnParams, config: ModelConfig, scaler) -> dict:
    arrays = {}
    pos_view = params.to_vector()
    for name, start, stop in params.vector_layout():
        arrays[name] = _array_entry(pos_view[start:stop])
    return {
        "format_version": MODEL_FORMAT_VERSION,
        "config": {
            "window_len": config.window_len,
            "hidden_channels": config.hidden_channels,
            "kernel_size": config.kernel_size,
            "num_blocks": config.num_blocks,
            "seed": config.seed,
        },
        "scaler": {"min": scaler.min, "max": scaler.max},
        "params": arrays,
    }


def params_from_document(doc: dict):
    """Validate and decode a model document; returns (params, config, scaler)."""
    from .data import Scaler  # local import to avoid a cycle

    if not isinstance(doc, dict):
        raise SchemaError("model document must be a JSON object")
    version = doc.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise VersionError(
            f"unsupported model format_version {version!r}, "
            f"expected {MODEL_FORMAT_VERSION}"
        )
    for key in ("config", "scaler", "params"):
        if key not in doc:
            raise SchemaError(f"model document is missing the '{key}' section")
    try:
        config = ModelConfig(**doc["config"])
    except (TypeError, ConfigError) as exc:
        raise SchemaError(f"invalid model config: {exc}") from exc
    try:
        scaler = Scaler(float(doc["scaler"]["min"]), float(doc["scaler"]["max"]))
    except (KeyError, TypeError, ValueError, ConfigError) as exc:
        raise SchemaError(f"invalid scaler section: {exc}") from exc

    template = init_params(config)
    layout = template.vector_layout()
    arrays = doc["params"]
    vec = np.empty(template.to_vector().size)
    for name, start, stop in layout:
        if name not in arrays:
            raise SchemaError(f"model document is missing parameter '{name}'")
        entry = arrays[name]
        try:
            declared = tuple(entry["shape"])
            values = np.asarray(entry["data"], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"parameter '{name}' is malformed: {exc}") from exc
        if values.shape != declared:
            raise SchemaError(
                f"parameter '{name}' declares shape {list(declared)} but "
                f"carries {list(values.shape)}"
            )
        if values.size != stop - start:
            raise SchemaError(
                f"parameter '{name}' has {values.size} values, expected {stop - start}"
            )
        if not np.all(np.isfinite(values)):
            raise SchemaError(f"parameter '{name}' contains non-finite values")
        vec[start:stop] = values.ravel()
    extra = set(arrays) - {name for name, _, _ in layout}
    if extra:
        raise SchemaError(f"model document has unknown parameters: {sorted(extra)}")
    return params_from_vector(vec, config), config, scaler


def save_model(params: IarnParams, config: ModelConfig, scaler, path) -> None:
    """Write the model atomically so failed runs leave no partial file."""
    doc = params_to_document(params, config, scaler)
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def load_model(path):
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"model file is not valid JSON: {exc}") from exc
    return params_from_document(doc)
