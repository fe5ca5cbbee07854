from __future__ import annotations

from typing import Tuple

import numpy as np

from core.constants import SUBSAMPLING_FACTOR

from .models import MaskSpec


def span_mask(num_frames: int, spec: MaskSpec, rng: np.random.Generator) -> np.ndarray:
    """Boolean mask: every frame starts a span with start_probability; spans are clipped at the end."""
    starts = rng.random(num_frames) < spec.start_probability
    if num_frames == 0:
        return starts
    covered = np.convolve(starts.astype(np.int64), np.ones(spec.span_frames, dtype=np.int64))[:num_frames]
    return covered > 0


def draw_mask(shape: Tuple[int, int], spec: MaskSpec) -> Tuple[np.ndarray, np.ndarray]:
    """(frame mask, replacement noise) for a T x D sequence, both fixed by spec.seed."""
    rng = np.random.default_rng(spec.seed)
    mask = span_mask(shape[0], spec, rng)
    noise = rng.normal(spec.noise_mean, spec.noise_std, size=shape)
    return mask, noise


def apply_mask(features: np.ndarray, spec: MaskSpec) -> Tuple[np.ndarray, np.ndarray]:
    features = np.asarray(features)
    mask, noise = draw_mask(features.shape, spec)

    out = features.copy()
    out[mask] = noise[mask]
    return out, np.flatnonzero(mask).astype(np.int64)


def encoder_mask(mask_indices: np.ndarray, num_frames: int, factor: int = SUBSAMPLING_FACTOR) -> np.ndarray:
    """Encoder-rate mask indices: an encoder frame is masked if any of its `factor` input frames is."""
    t_enc = num_frames // factor
    idx = np.asarray(mask_indices, dtype=np.int64) // factor
    return np.unique(idx[idx < t_enc])


def item_seed(seed: int, step: int, index: int) -> int:
    """Mask seed for one utterance of one step; stable across resumes."""
    return int(np.random.SeedSequence([int(seed), int(step), int(index)]).generate_state(1)[0])
