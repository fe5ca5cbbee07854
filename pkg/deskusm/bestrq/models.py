from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from threading import Lock

import numpy as np

from core.constants import FRAME_HOP


def _digest(projection: np.ndarray, codebooks: np.ndarray) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(projection, dtype="<f8").tobytes())
    h.update(np.ascontiguousarray(codebooks, dtype="<f8").tobytes())
    return h.hexdigest()


@dataclass(frozen=True, eq=False)
class RandomQuantizer:
    """Frozen projection (d_in x d_emb) shared by N codebooks of c unit-direction code vectors."""

    projection: np.ndarray
    codebooks: np.ndarray
    checksum: str = ""

    def __post_init__(self):
        if self.projection.ndim != 2:
            raise ValueError(f"projection must be 2-D, got shape {self.projection.shape}")
        if self.codebooks.ndim != 3 or self.codebooks.shape[2] != self.projection.shape[1]:
            raise ValueError(
                f"codebooks must be N x c x {self.projection.shape[1]}, got shape {self.codebooks.shape}"
            )
        if np.any(np.linalg.norm(self.codebooks, axis=-1) == 0):
            raise ValueError("every codebook vector must have nonzero norm")
        for arr in (self.projection, self.codebooks):
            arr.setflags(write=False)
        if not self.checksum:
            object.__setattr__(self, "checksum", _digest(self.projection, self.codebooks))

    @property
    def d_in(self) -> int:
        return int(self.projection.shape[0])

    @property
    def d_emb(self) -> int:
        return int(self.projection.shape[1])

    @property
    def num_codebooks(self) -> int:
        return int(self.codebooks.shape[0])

    @property
    def codebook_size(self) -> int:
        return int(self.codebooks.shape[1])

    def current_checksum(self) -> str:
        return _digest(self.projection, self.codebooks)


@dataclass(frozen=True)
class MaskSpec:
    start_probability: float = 0.01
    span: float = 0.4
    noise_mean: float = 0.0
    noise_std: float = 0.1
    seed: int = 0
    frame_hop: float = FRAME_HOP

    def __post_init__(self):
        if not 0.0 <= self.start_probability <= 1.0:
            raise ValueError(f"start_probability must be in [0, 1], got {self.start_probability}")
        if self.span <= 0:
            raise ValueError(f"span must be positive, got {self.span}")
        if self.noise_std < 0:
            raise ValueError(f"noise_std must be non-negative, got {self.noise_std}")

    @property
    def span_frames(self) -> int:
        return max(1, int(round(self.span / self.frame_hop)))

    def expected_coverage(self) -> float:
        return 1.0 - (1.0 - self.start_probability) ** self.span_frames


@dataclass(frozen=True, eq=False)
class QuantizedTargets:
    labels: np.ndarray
    mask_indices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    degenerate_frames: int = 0

    def __post_init__(self):
        if self.labels.ndim != 2:
            raise ValueError(f"labels must be N x T, got shape {self.labels.shape}")
        idx = np.asarray(self.mask_indices, dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= self.labels.shape[1]):
            raise ValueError(f"mask indices outside [0, {self.labels.shape[1]})")
        object.__setattr__(self, "mask_indices", np.unique(idx))

    @property
    def num_frames(self) -> int:
        return int(self.labels.shape[1])


class BestRqStats:
    """Thread-safe counters for recoverable quantization/masking events."""

    def __init__(self):
        self._lock = Lock()
        self.degenerate_frames = 0
        self.empty_masks = 0

    def add(self, degenerate_frames: int = 0, empty_masks: int = 0) -> None:
        with self._lock:
            self.degenerate_frames += int(degenerate_frames)
            self.empty_masks += int(empty_masks)

    def as_dict(self) -> dict:
        with self._lock:
            return {"degenerate_frames": self.degenerate_frames, "empty_masks": self.empty_masks}
