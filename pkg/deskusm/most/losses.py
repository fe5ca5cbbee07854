from __future__ import annotations

import logging
from typing import Optional

import numpy as np

from bestrq import MaskSpec, draw_mask
from ctc import CtcResult, LabelSequence, ctc_loss
from encoder import AttentionPattern, UsmModel
from numerics import Tensor, no_grad, ops

from .text import TextEncoder, interpolation_matrix

log = logging.getLogger(__name__)


def aligned_mse(text_frames: Tensor, speech_frames: np.ndarray) -> Tensor:
    """MSE after linearly interpolating text frames onto the speech time axis."""
    m = interpolation_matrix(text_frames.shape[0], speech_frames.shape[0])
    aligned = text_frames if m.shape[0] == m.shape[1] else ops.matmul(Tensor(m), text_frames)
    return ops.mse(aligned, Tensor(speech_frames))


def consistency_loss(
    model: UsmModel,
    text_encoder: TextEncoder,
    features: np.ndarray,
    labels: LabelSequence,
    pattern: AttentionPattern,
) -> Optional[Tensor]:
    """Text-encoder output against the frozen speech embedding of the same utterance; None for empty text."""
    if len(labels) == 0:
        log.warning("consistency_loss: empty transcript skipped")
        return None
    with no_grad():
        speech = model.embed_speech(features, pattern).data
    return aligned_mse(text_encoder(labels, pattern), speech)


def text_reconstruction_loss(
    model: UsmModel,
    text_encoder: TextEncoder,
    labels: LabelSequence,
    mask_spec: MaskSpec,
    pattern: AttentionPattern,
) -> CtcResult:
    """Mask text-encoder frames, run the shared encoder and score the original text with CTC."""
    frames = text_encoder(labels, pattern)
    mask, noise = draw_mask(frames.shape, mask_spec)
    masked = ops.masked_replace(frames, mask, noise)
    encoded = model.encoder.encode(masked, pattern)
    return ctc_loss(model.log_probs(encoded), labels)
