"""Encoder-transformer for RUL regression, built on the autodiff engine.

Pipeline per sample: input transform -> positional encoding (unmasked
positions only) -> stacked post-norm blocks (multi-head self-attention,
add & norm, feed-forward, add & norm) -> masked pooling -> 2-layer head.
All three ablation axes (norm kind, positional encoding, input transform)
are configuration switches.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field, asdict

import numpy as np

from .autodiff import NEG_INF, Tensor, concat, linear
from .errors import EmptyMask, ShapeMismatch, UsageError

CHECKPOINT_MAGIC = b"RULF1"


@dataclass(frozen=True)
class ModelConfig:
    d_features: int
    d_model: int
    n_heads: int = 2
    n_blocks: int = 2
    dim_ffw: int = 10
    dropout_rate: float = 0.4
    input_transform: str = "linear"        # "none" | "linear" | "conv1d"
    conv_kernel: int = 3
    positional_encoding: str = "fixed"     # "fixed" | "learnable"
    norm_kind: str = "layer"               # "layer" | "batch"
    max_len: int = 30
    pooling: str = "last"                  # "last" | "mean"

    def __post_init__(self):
        if self.input_transform not in ("none", "linear", "conv1d"):
            raise UsageError(f"unknown input_transform {self.input_transform!r}")
        if self.positional_encoding not in ("fixed", "learnable"):
            raise UsageError(f"unknown positional_encoding {self.positional_encoding!r}")
        if self.norm_kind not in ("layer", "batch"):
            raise UsageError(f"unknown norm_kind {self.norm_kind!r}")
        if self.pooling not in ("last", "mean"):
            raise UsageError(f"unknown pooling {self.pooling!r}")
        if self.d_model % self.n_heads != 0:
            raise UsageError(f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")
        if self.input_transform == "none" and self.d_model != self.d_features:
            raise UsageError("input_transform=none requires d_model == d_features")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise UsageError("dropout_rate must be in [0, 1)")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def parameter_layout(config: ModelConfig):
    """Declaration-ordered (name, shape) pairs for every trainable tensor."""
    d, f = config.d_model, config.dim_ffw
    layout = []
    if config.input_transform == "linear":
        layout += [("in_proj_w", (config.d_features, d)), ("in_proj_b", (d,))]
    elif config.input_transform == "conv1d":
        layout += [("conv_w", (config.conv_kernel, config.d_features, d)),
                   ("conv_b", (d,))]
    if config.positional_encoding == "learnable":
        layout += [("pos_table", (config.max_len, d))]
    for i in range(config.n_blocks):
        p = f"blk{i}_"
        layout += [(p + "wq", (d, d)), (p + "wk", (d, d)), (p + "wv", (d, d)),
                   (p + "wa", (d, d)),
                   (p + "norm1_gamma", (d,)), (p + "norm1_beta", (d,)),
                   (p + "ffw_w1", (d, f)), (p + "ffw_b1", (f,)),
                   (p + "ffw_w2", (f, d)), (p + "ffw_b2", (d,)),
                   (p + "norm2_gamma", (d,)), (p + "norm2_beta", (d,))]
    layout += [("head_w1", (d, f)), ("head_b1", (f,)),
               ("head_w2", (f, 1)), ("head_b2", (1,))]
    return layout


def buffer_layout(config: ModelConfig):
    """Running-statistic buffers (batch norm only)."""
    if config.norm_kind != "batch":
        return []
    d = config.d_model
    layout = []
    for i in range(config.n_blocks):
        for site in ("norm1", "norm2"):
            layout += [(f"blk{i}_{site}_running_mean", (d,)),
                       (f"blk{i}_{site}_running_var", (d,))]
    return layout


def init_params(config: ModelConfig, seed=0):
    """Glorot-uniform weights, zero biases, unit norm scales; seeded."""
    rng = np.random.default_rng([seed & 0xFFFFFFFF, zlib.crc32(b"model-init")])
    params = {}
    for name, shape in parameter_layout(config):
        if name.endswith(("_b", "_b1", "_b2", "_beta")) or name.endswith("_bias"):
            data = np.zeros(shape)
        elif name.endswith("_gamma"):
            data = np.ones(shape)
        elif name == "pos_table":
            data = rng.normal(0.0, 0.02, size=shape)
        elif len(shape) == 1:
            data = np.zeros(shape)
        else:
            if name == "conv_w":
                fan_in = shape[0] * shape[1]
                fan_out = shape[2]
            else:
                fan_in, fan_out = shape[-2], shape[-1]
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            data = rng.uniform(-limit, limit, size=shape)
        params[name] = Tensor(data, requires_grad=True, name=name)
    buffers = {}
    for name, shape in buffer_layout(config):
        buffers[name] = np.ones(shape) if name.endswith("_var") else np.zeros(shape)
    return params, buffers


def sinusoidal_table(max_len, d_model):
    """entry (pos, 2i) = sin(pos / 10000^(2i/d)); (pos, 2i+1) = cos of the same."""
    table = np.zeros((max_len, d_model))
    pos = np.arange(max_len)[:, None].astype(np.float64)
    i = np.arange(0, d_model, 2).astype(np.float64)
    angle = pos / np.power(10000.0, i / d_model)
    table[:, 0::2] = np.sin(angle)
    table[:, 1::2] = np.cos(angle[:, : d_model // 2])
    return table


def input_transform(x: Tensor, config: ModelConfig, params) -> Tensor:
    """Map (N, T, d_features) onto model space per the configured transform."""
    if config.input_transform == "none":
        return x
    if config.input_transform == "linear":
        return linear(x, params["in_proj_w"], params["in_proj_b"])
    # conv1d: "same" zero-padded temporal convolution; d_model output channels
    k = config.conv_kernel
    half = k // 2
    N, T, D = x.data.shape
    out = None
    for tap in range(k):
        offset = tap - half
        shifted = np.zeros((N, T, D))
        if offset < 0:
            shifted[:, -offset:] = x.data[:, :T + offset]
        elif offset > 0:
            shifted[:, :T - offset] = x.data[:, offset:]
        else:
            shifted = x.data
        term = Tensor(shifted).matmul(params["conv_w"][tap])
        out = term if out is None else out + term
    return out + params["conv_b"]


def scaled_dot_attention(q: Tensor, k: Tensor, v: Tensor, additive_mask=None) -> Tensor:
    """softmax(Q K^T / sqrt(d_k)) V over the key axis, masked keys suppressed."""
    d_k = q.data.shape[-1]
    scores = q.matmul(k.transpose_last()) * (1.0 / np.sqrt(d_k))
    weights = scores.softmax(additive_mask=additive_mask)
    return weights.matmul(v), weights


def multi_head_attention(x: Tensor, config: ModelConfig, params, prefix,
                         additive_mask) -> Tensor:
    N, T, d = x.data.shape
    H = config.n_heads
    dk = d // H

    def split_heads(t):
        return t.reshape((N, T, H, dk)).transpose((0, 2, 1, 3))

    q = split_heads(x.matmul(params[prefix + "wq"]))
    k = split_heads(x.matmul(params[prefix + "wk"]))
    v = split_heads(x.matmul(params[prefix + "wv"]))
    attended, _ = scaled_dot_attention(q, k, v, additive_mask)
    merged = attended.transpose((0, 2, 1, 3)).reshape((N, T, d))
    return merged.matmul(params[prefix + "wa"])


def norm_layer(x: Tensor, config: ModelConfig, params, buffers, site,
               mask3, train) -> Tensor:
    """Layer norm per timestep, or masked batch norm per channel."""
    gamma, beta = params[site + "_gamma"], params[site + "_beta"]
    eps = 1e-5
    if config.norm_kind == "layer":
        mu = x.mean(axis=-1, keepdims=True)
        var = x.var(axis=-1, keepdims=True)
        return ((x - mu) / (var + eps).sqrt()) * gamma + beta
    # batch norm over (batch x unmasked timesteps), per feature channel
    if train:
        w = mask3  # (N, T, 1) constant
        count = float(w.data.sum())
        mu = (x * w).sum(axis=0).sum(axis=0) * (1.0 / count)          # (d,)
        d0 = (x - mu) * w
        var = (d0 * d0).sum(axis=0).sum(axis=0) * (1.0 / count)       # (d,)
        momentum = 0.1
        buffers[site + "_running_mean"] = ((1 - momentum) * buffers[site + "_running_mean"]
                                           + momentum * mu.data)
        buffers[site + "_running_var"] = ((1 - momentum) * buffers[site + "_running_var"]
                                          + momentum * var.data)
    else:
        mu = Tensor(buffers[site + "_running_mean"])
        var = Tensor(buffers[site + "_running_var"])
    return ((x - mu) / (var + eps).sqrt()) * gamma + beta


def encoder_block(x: Tensor, config: ModelConfig, params, buffers, i,
                  additive_mask, mask3, train, rng) -> Tensor:
    p = f"blk{i}_"
    a = multi_head_attention(x, config, params, p, additive_mask)
    a = a.dropout(config.dropout_rate, train, rng)
    h = norm_layer(x + a, config, params, buffers, p + "norm1", mask3, train)
    f = linear(linear(h, params[p + "ffw_w1"], params[p + "ffw_b1"]).relu(),
               params[p + "ffw_w2"], params[p + "ffw_b2"])
    f = f.dropout(config.dropout_rate, train, rng)
    return norm_layer(h + f, config, params, buffers, p + "norm2", mask3, train)


def forward_batch(features, mask, config: ModelConfig, params, buffers,
                  train=False, rng=None) -> Tensor:
    """Predict scaled RUL for a batch: features (N, T, D), mask (N, T) -> (N,)."""
    features = np.asarray(features, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    if features.ndim != 3 or mask.shape != features.shape[:2]:
        raise ShapeMismatch(f"features {features.shape} vs mask {mask.shape}")
    if features.shape[1] != config.max_len:
        raise ShapeMismatch(
            f"sample pad_to {features.shape[1]} != config.max_len {config.max_len}")
    if features.shape[2] != config.d_features:
        raise ShapeMismatch(
            f"sample D {features.shape[2]} != config.d_features {config.d_features}")
    counts = mask.sum(axis=1)
    if (counts == 0).any():
        raise EmptyMask("a sample has an all-zero mask")
    if train and rng is None:
        rng = np.random.default_rng(0)

    N, T, _ = features.shape
    mask3 = Tensor(mask[:, :, None])
    x = Tensor(features * mask[:, :, None])  # padded rows forced to exact zero
    h = input_transform(x, config, params)

    if config.positional_encoding == "fixed":
        pe = Tensor(sinusoidal_table(config.max_len, config.d_model))
    else:
        pe = params["pos_table"]
    h = h + pe * mask3  # positions added only at unmasked timesteps

    additive_mask = (NEG_INF * (1.0 - mask))[:, None, None, :]  # (N,1,1,T)
    for i in range(config.n_blocks):
        h = encoder_block(h, config, params, buffers, i, additive_mask, mask3,
                          train, rng)

    if config.pooling == "last":
        sel = np.zeros((N, T, 1))
        for n in range(N):
            ones = np.flatnonzero(mask[n])
            sel[n, ones[-1], 0] = 1.0
        pooled = (h * Tensor(sel)).sum(axis=1)
    else:
        pooled = (h * mask3).sum(axis=1) / counts[:, None]

    z = linear(pooled, params["head_w1"], params["head_b1"]).relu()
    z = z.dropout(config.dropout_rate, train, rng)
    out = linear(z, params["head_w2"], params["head_b2"])
    return out.reshape((N,))


def forward(sample, config: ModelConfig, params, buffers, train=False, rng=None):
    """Single-sample convenience wrapper; returns a float prediction."""
    pred = forward_batch(sample.features[None], sample.mask[None], config,
                         params, buffers, train=train, rng=rng)
    return float(pred.data[0])


# ----------------------------------------------------------------------
# checkpoint: magic, length-prefixed JSON config, tensors in layout order
# ----------------------------------------------------------------------

def save_checkpoint(path, config: ModelConfig, params, buffers):
    blob = json.dumps(config.to_dict(), sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for name, shape in parameter_layout(config):
            arr = params[name].data
            if tuple(arr.shape) != tuple(shape):
                raise ShapeMismatch(f"{name}: {arr.shape} != declared {shape}")
            fh.write(arr.astype("<f8").tobytes())
        for name, shape in buffer_layout(config):
            fh.write(buffers[name].astype("<f8").tobytes())


def load_checkpoint(path):
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise UsageError(f"not a checkpoint file: bad magic {magic!r}")
        (length,) = struct.unpack("<I", fh.read(4))
        config = ModelConfig.from_dict(json.loads(fh.read(length).decode()))
        params = {}
        for name, shape in parameter_layout(config):
            n = int(np.prod(shape)) if shape else 1
            arr = np.frombuffer(fh.read(n * 8), dtype="<f8").reshape(shape).copy()
            params[name] = Tensor(arr, requires_grad=True, name=name)
        buffers = {}
        for name, shape in buffer_layout(config):
            n = int(np.prod(shape))
            buffers[name] = np.frombuffer(fh.read(n * 8), dtype="<f8").reshape(shape).copy()
    return config, params, buffers
