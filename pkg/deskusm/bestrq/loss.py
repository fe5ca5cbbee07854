from __future__ import annotations

import logging
from typing import List

import numpy as np

from numerics import Linear, Module, ShapeError, Tensor, ops

from .masking import apply_mask, encoder_mask
from .models import MaskSpec, QuantizedTargets, RandomQuantizer
from .quantizer import STATS, quantize, stack_frames

log = logging.getLogger(__name__)


class MultiSoftmaxHeads(Module):
    """One linear softmax head per codebook."""

    def __init__(self, model_dim: int, num_codebooks: int, codebook_size: int, rng: np.random.Generator):
        super().__init__()
        self.num_codebooks = num_codebooks
        self.codebook_size = codebook_size
        self.heads: List[Linear] = [
            self.add_module(f"head{n}", Linear(model_dim, codebook_size, rng)) for n in range(num_codebooks)
        ]

    def __len__(self) -> int:
        return len(self.heads)


def _check(encoder_output: Tensor, targets: QuantizedTargets, heads: MultiSoftmaxHeads) -> None:
    if encoder_output.shape[0] != targets.num_frames:
        raise ShapeError(
            f"encoder output has {encoder_output.shape[0]} frames, targets have {targets.num_frames}"
        )
    if len(heads) != targets.labels.shape[0]:
        raise ShapeError(f"{len(heads)} softmax heads for {targets.labels.shape[0]} codebooks")


def bestrq_loss(encoder_output: Tensor, targets: QuantizedTargets, heads: MultiSoftmaxHeads) -> Tensor:
    """Equal-weight mean over heads of the masked-frame cross-entropy."""
    _check(encoder_output, targets, heads)
    idx = targets.mask_indices
    if idx.size == 0:
        STATS.add(empty_masks=1)
        log.warning("bestrq_loss: empty mask, loss is 0")
        return Tensor(0.0)

    rows = ops.take(encoder_output, idx)
    total = None
    for n, head in enumerate(heads.heads):
        ce = ops.cross_entropy(head(rows), targets.labels[n, idx])
        total = ce if total is None else total + ce
    return total * (1.0 / len(heads))


def masked_accuracy(encoder_output: Tensor, targets: QuantizedTargets, heads: MultiSoftmaxHeads) -> np.ndarray:
    """Per-head fraction of masked frames whose argmax logit equals the target code."""
    _check(encoder_output, targets, heads)
    idx = targets.mask_indices
    if idx.size == 0:
        return np.full(len(heads), np.nan)
    rows = encoder_output.data[idx]
    acc = [
        float(np.mean(np.argmax(rows @ h.weight.data + h.bias.data, axis=-1) == targets.labels[n, idx]))
        for n, h in enumerate(heads.heads)
    ]
    return np.asarray(acc)


def prepare_example(features: np.ndarray, q: RandomQuantizer, spec: MaskSpec):
    """Quantize the clean stacked frames of already-normalized features, then mask at the 10 ms rate.

    Returns (masked features, targets aligned to encoder frames).
    """
    clean = np.asarray(features, dtype=np.float64)
    targets = quantize(stack_frames(clean), q)
    masked, idx = apply_mask(clean, spec)
    enc_idx = encoder_mask(idx, clean.shape[0])
    return masked, QuantizedTargets(
        labels=targets.labels, mask_indices=enc_idx, degenerate_frames=targets.degenerate_frames
    )
