from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from core.constants import FRAME_HOP, FRAME_WINDOW, N_MELS


@dataclass(frozen=True, eq=False)
class AudioClip:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.isfinite(self.samples).all():
            raise ValueError("audio samples contain non-finite values")

    @property
    def duration(self) -> float:
        return len(self.samples) / float(self.sample_rate)


@dataclass(frozen=True, eq=False)
class FeatureSequence:
    frames: np.ndarray
    frame_hop: float = FRAME_HOP
    frame_window: float = FRAME_WINDOW

    def __post_init__(self):
        if self.frames.ndim != 2 or self.frames.shape[1] != N_MELS:
            raise ValueError(f"feature frames must be T x {N_MELS}, got {self.frames.shape}")
        if not np.isfinite(self.frames).all():
            raise ValueError("feature frames contain non-finite values")

    @property
    def num_frames(self) -> int:
        return int(self.frames.shape[0])

    @property
    def duration(self) -> float:
        return self.num_frames * self.frame_hop
