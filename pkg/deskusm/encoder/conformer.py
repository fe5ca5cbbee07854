from __future__ import annotations

import logging
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from numerics import LayerNorm, Linear, Module, ShapeError, Tensor, ops

from .masks import build_attention_mask, mask_bias, relative_index
from .models import AttentionPattern, ConformerConfig

log = logging.getLogger(__name__)

AdapterPair = Tuple[Optional[Module], Optional[Module]]


class FeedForward(Module):
    def __init__(self, dim: int, multiplier: int, rng: np.random.Generator):
        super().__init__()
        self.norm = self.add_module("norm", LayerNorm(dim))
        self.up = self.add_module("up", Linear(dim, multiplier * dim, rng))
        self.down = self.add_module("down", Linear(multiplier * dim, dim, rng))

    def __call__(self, x: Tensor) -> Tensor:
        return self.down(ops.swish(self.up(self.norm(x))))


class SelfAttention(Module):
    """Multi-head self-attention with an optional learned per-head bias over clipped relative distance."""

    def __init__(self, cfg: ConformerConfig, rng: np.random.Generator):
        super().__init__()
        d = cfg.model_dim
        self.heads = cfg.attention_heads
        self.head_dim = cfg.head_dim
        self.cap = cfg.relative_cap
        self.norm = self.add_module("norm", LayerNorm(d))
        self.query = self.add_module("query", Linear(d, d, rng))
        self.key = self.add_module("key", Linear(d, d, rng))
        self.value = self.add_module("value", Linear(d, d, rng))
        self.out = self.add_module("out", Linear(d, d, rng))
        self.rel_bias = self.add_param("rel_bias", np.zeros((2 * self.cap + 1, self.heads))) if cfg.relative_attention else None

    def _split(self, x: Tensor) -> Tensor:
        t = x.shape[0]
        return ops.transpose(ops.reshape(x, (t, self.heads, self.head_dim)), (1, 0, 2))

    def __call__(self, x: Tensor, bias: np.ndarray) -> Tensor:
        t = x.shape[0]
        h = self.norm(x)
        q, k, v = self._split(self.query(h)), self._split(self.key(h)), self._split(self.value(h))
        scores = ops.scale(ops.matmul(q, ops.transpose(k, (0, 2, 1))), 1.0 / np.sqrt(self.head_dim))
        if self.rel_bias is not None:
            rel = ops.take(self.rel_bias, relative_index(t, self.cap))
            scores = ops.add(scores, ops.transpose(rel, (2, 0, 1)))
        weights = ops.softmax(ops.add(scores, Tensor(bias)), axis=-1)
        ctx = ops.transpose(ops.matmul(weights, v), (1, 0, 2))
        return self.out(ops.reshape(ctx, (t, self.heads * self.head_dim)))


class ConvModule(Module):
    """Gated pointwise projection, depthwise convolution over time, norm, swish, pointwise projection."""

    def __init__(self, dim: int, kernel: int, rng: np.random.Generator):
        super().__init__()
        self.norm = self.add_module("norm", LayerNorm(dim))
        self.value = self.add_module("value", Linear(dim, dim, rng))
        self.gate = self.add_module("gate", Linear(dim, dim, rng))
        limit = 1.0 / np.sqrt(kernel)
        self.depthwise = self.add_param("depthwise", rng.uniform(-limit, limit, size=(kernel, dim)))
        self.depthwise_bias = self.add_param("depthwise_bias", np.zeros(dim))
        self.conv_norm = self.add_module("conv_norm", LayerNorm(dim))
        self.project = self.add_module("project", Linear(dim, dim, rng))

    def __call__(self, x: Tensor) -> Tensor:
        h = self.norm(x)
        h = ops.mul(self.value(h), ops.sigmoid(self.gate(h)))
        h = ops.add(ops.depthwise_conv1d(h, self.depthwise), self.depthwise_bias)
        return self.project(ops.swish(self.conv_norm(h)))


class ConformerBlock(Module):
    def __init__(self, cfg: ConformerConfig, rng: np.random.Generator):
        super().__init__()
        d = cfg.model_dim
        self.ff1 = self.add_module("ff1", FeedForward(d, cfg.ff_multiplier, rng))
        self.attention = self.add_module("attention", SelfAttention(cfg, rng))
        self.conv = self.add_module("conv", ConvModule(d, cfg.conv_kernel_size, rng)) if cfg.use_conv else None
        self.ff2 = self.add_module("ff2", FeedForward(d, cfg.ff_multiplier, rng))
        self.final_norm = self.add_module("final_norm", LayerNorm(d))

    def __call__(self, x: Tensor, bias: np.ndarray, adapters: Optional[AdapterPair] = None) -> Tensor:
        a1, a2 = adapters if adapters is not None else (None, None)
        y = ops.add(x, ops.scale(self.ff1(x), 0.5))
        if a1 is not None:
            y = ops.add(y, a1(x))
        y = ops.add(y, self.attention(y, bias))
        if self.conv is not None:
            y = ops.add(y, self.conv(y))
        z = ops.add(y, ops.scale(self.ff2(y), 0.5))
        if a2 is not None:
            z = ops.add(z, a2(y))
        return self.final_norm(z)


class Subsampling(Module):
    """Stack of kernel-2 stride-2 convolutions; each output frame sees exactly `factor` input frames."""

    def __init__(self, cfg: ConformerConfig, rng: np.random.Generator):
        super().__init__()
        self.factor = cfg.subsampling_factor
        self.convs = []
        c_in = cfg.input_dim
        for n in range(cfg.stem_layers):
            limit = np.sqrt(6.0 / (2 * c_in + cfg.model_dim))
            w = self.add_param(f"conv{n}.weight", rng.uniform(-limit, limit, size=(2, c_in, cfg.model_dim)))
            b = self.add_param(f"conv{n}.bias", np.zeros(cfg.model_dim))
            self.convs.append((w, b))
            c_in = cfg.model_dim
        self.project = self.add_module("project", Linear(c_in, cfg.model_dim, rng))

    def __call__(self, x: Tensor) -> Tensor:
        for w, b in self.convs:
            x = ops.swish(ops.add(ops.conv1d(x, w, stride=2), b))
        return self.project(x)


class ConformerEncoder(Module):
    def __init__(self, cfg: ConformerConfig, rng: np.random.Generator):
        super().__init__()
        self.config = cfg
        self.stem = self.add_module("stem", Subsampling(cfg, rng))
        self.layers = [self.add_module(f"layer{n}", ConformerBlock(cfg, rng)) for n in range(cfg.num_layers)]

    def output_frames(self, num_frames: int) -> int:
        return num_frames // self.config.subsampling_factor

    def embed(self, features: Union[np.ndarray, Tensor]) -> Tensor:
        x = features if isinstance(features, Tensor) else Tensor(features)
        if x.ndim != 2 or x.shape[1] != self.config.input_dim:
            raise ShapeError(f"encoder expects T x {self.config.input_dim} features, got {x.shape}")
        if self.output_frames(x.shape[0]) == 0:
            raise ValueError(
                f"{x.shape[0]} feature frames leave no encoder frames after {self.config.subsampling_factor}x subsampling"
            )
        return self.stem(x)

    def encode(
        self,
        x: Tensor,
        pattern: AttentionPattern,
        adapters: Optional[Sequence[AdapterPair]] = None,
        layers: Optional[Sequence[ConformerBlock]] = None,
    ) -> Tensor:
        """Run conformer blocks on already-subsampled frames."""
        bias = mask_bias(build_attention_mask(pattern, x.shape[0]))
        blocks = self.layers if layers is None else layers
        if adapters is not None and len(adapters) != len(blocks):
            raise ValueError(f"{len(adapters)} adapter pairs for {len(blocks)} conformer layers")
        for n, block in enumerate(blocks):
            x = block(x, bias, adapters[n] if adapters is not None else None)
        return x

    def __call__(
        self,
        features: Union[np.ndarray, Tensor],
        pattern: AttentionPattern,
        adapters: Optional[Sequence[AdapterPair]] = None,
    ) -> Tensor:
        return self.encode(self.embed(features), pattern, adapters)


def conformer_forward(
    model: ConformerEncoder,
    features: Union[np.ndarray, Tensor],
    pattern: AttentionPattern,
    adapters: Optional[Sequence[AdapterPair]] = None,
) -> Tensor:
    return model(features, pattern, adapters)


def _linear(i: int, o: int) -> int:
    return i * o + o


def conformer_param_count(cfg: ConformerConfig) -> int:
    d, f, k = cfg.model_dim, cfg.ff_multiplier, cfg.conv_kernel_size
    norm = 2 * d
    ff = norm + _linear(d, f * d) + _linear(f * d, d)
    attn = norm + 4 * _linear(d, d)
    if cfg.relative_attention:
        attn += (2 * cfg.relative_cap + 1) * cfg.attention_heads
    conv = norm + 2 * _linear(d, d) + k * d + d + norm + _linear(d, d) if cfg.use_conv else 0
    block = 2 * ff + attn + conv + norm

    stem, c_in = 0, cfg.input_dim
    for _ in range(cfg.stem_layers):
        stem += 2 * c_in * d + d
        c_in = d
    stem += _linear(c_in, d)
    return stem + cfg.num_layers * block
