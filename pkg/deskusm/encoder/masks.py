from __future__ import annotations

import numpy as np

from core.constants import PatternKind

from .models import AttentionPattern


def build_attention_mask(pattern: AttentionPattern, num_frames: int) -> np.ndarray:
    """T x T boolean matrix; mask[i, j] is true when query i may attend to key j."""
    if num_frames < 1:
        raise ValueError(f"attention mask needs at least one frame, got {num_frames}")
    i = np.arange(num_frames)[:, None]
    j = np.arange(num_frames)[None, :]
    if pattern.kind is PatternKind.LOCAL:
        d = j - i
        return (d >= -pattern.left) & (d <= pattern.right)
    if pattern.kind is PatternKind.CHUNK:
        return (i // pattern.chunk) == (j // pattern.chunk)
    return np.ones((num_frames, num_frames), dtype=bool)


def mask_bias(mask: np.ndarray) -> np.ndarray:
    return np.where(mask, 0.0, -np.inf)


def relative_index(num_frames: int, cap: int) -> np.ndarray:
    """Index into a (2*cap + 1)-row bias table for clipped distance j - i."""
    i = np.arange(num_frames)[:, None]
    j = np.arange(num_frames)[None, :]
    return np.clip(j - i, -cap, cap) + cap
