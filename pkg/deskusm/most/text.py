from __future__ import annotations

from functools import lru_cache

import numpy as np

from core.constants import SUBSAMPLING_FACTOR
from ctc import LabelSequence
from encoder import AttentionPattern, ConformerBlock, ConformerConfig, build_attention_mask, mask_bias
from numerics import Embedding, Module, Tensor, ops


def upsample_text(token_embeddings: Tensor, factor: int) -> Tensor:
    """Repeat every token embedding `factor` times in place."""
    if int(factor) != factor or factor < 1:
        raise ValueError(f"upsampling factor must be a positive integer, got {factor}")
    return ops.repeat(token_embeddings, int(factor))


class TextEncoder(Module):
    """Grapheme embeddings, fixed-repetition upsampler and one conformer block."""

    def __init__(self, cfg: ConformerConfig, vocab_size: int, rng: np.random.Generator, factor: int = SUBSAMPLING_FACTOR):
        super().__init__()
        self.factor = factor
        self.embedding = self.add_module("embedding", Embedding(vocab_size, cfg.model_dim, rng, std=1.0))
        self.block = self.add_module("block", ConformerBlock(cfg, rng))

    def __call__(self, labels: LabelSequence, pattern: AttentionPattern) -> Tensor:
        if len(labels) == 0:
            raise ValueError("text encoder needs at least one token")
        x = upsample_text(self.embedding(np.asarray(labels.ids)), self.factor)
        return self.block(x, mask_bias(build_attention_mask(pattern, x.shape[0])))


@lru_cache(maxsize=256)
def interpolation_matrix(n_src: int, n_dst: int) -> np.ndarray:
    """(n_dst, n_src) weights for linear interpolation in time; identity when lengths match."""
    if n_src < 1 or n_dst < 1:
        raise ValueError(f"cannot interpolate {n_src} frames to {n_dst}")
    m = np.zeros((n_dst, n_src))
    if n_src == n_dst:
        np.fill_diagonal(m, 1.0)
    else:
        pos = np.zeros(1) if n_dst == 1 else np.arange(n_dst) * (n_src - 1) / (n_dst - 1)
        lo = np.floor(pos).astype(np.int64)
        hi = np.minimum(lo + 1, n_src - 1)
        frac = pos - lo
        rows = np.arange(n_dst)
        np.add.at(m, (rows, lo), 1.0 - frac)
        np.add.at(m, (rows, hi), frac)
    m.setflags(write=False)
    return m
