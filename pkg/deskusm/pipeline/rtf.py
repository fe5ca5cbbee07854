from __future__ import annotations

import logging
import os
import platform
import time
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Sequence

import numpy as np

from core.constants import FRAME_HOP, SUBSAMPLING_FACTOR
from encoder import AttentionPattern, UsmModel
from numerics import no_grad, precision

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RtfReport:
    """Throughput as audio seconds processed per wall-clock second (1.0/RTF)."""

    batch_size: int
    pattern: str
    params: int
    precision: str
    audio_seconds: float
    repeats: int
    wall_seconds: List[float]
    inverse_rtf: float
    inverse_rtf_std: float
    noise_band: float
    hardware: Dict[str, str] = field(default_factory=dict)

    def as_dict(self) -> dict:
        return asdict(self)


def hardware_info() -> Dict[str, str]:
    return {
        "machine": platform.machine(),
        "processor": platform.processor() or "unknown",
        "system": platform.system(),
        "cpus": str(os.cpu_count()),
        "python": platform.python_version(),
        "numpy": np.__version__,
    }


def pack_batch(features: Sequence[np.ndarray], batch_size: int) -> List[np.ndarray]:
    """Concatenate all frames along time and cut them into `batch_size` rows of equal length.

    Rows are rounded down to a multiple of the subsampling factor; leftover frames are dropped.
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be positive, got {batch_size}")
    if not features:
        raise ValueError("no audio to pack")
    stream = np.concatenate([np.asarray(f) for f in features], axis=0)
    row = (stream.shape[0] // batch_size) // SUBSAMPLING_FACTOR * SUBSAMPLING_FACTOR
    if row == 0:
        raise ValueError(
            f"{stream.shape[0]} frames cannot fill {batch_size} rows of at least {SUBSAMPLING_FACTOR} frames"
        )
    return [stream[i * row:(i + 1) * row] for i in range(batch_size)]


def rtf_bench(
    model: UsmModel,
    features: Sequence[np.ndarray],
    pattern: AttentionPattern,
    batch_size: int,
    repeats: int = 3,
    dtype: str = "float64",
) -> RtfReport:
    if repeats < 1:
        raise ValueError(f"repeats must be positive, got {repeats}")
    rows = pack_batch(features, batch_size)
    audio_seconds = sum(r.shape[0] for r in rows) * FRAME_HOP
    bench_model = model.astype(np.float32) if dtype == "float32" else model
    rows = [r.astype(np.float32 if dtype == "float32" else np.float64) for r in rows]

    walls = []
    with precision(dtype), no_grad():
        for _ in range(repeats):
            start = time.perf_counter()
            for r in rows:
                bench_model.log_probs(bench_model.encode(r, pattern))
            walls.append(time.perf_counter() - start)

    speeds = np.array([audio_seconds / w for w in walls])
    mean = float(np.mean(speeds))
    std = float(np.std(speeds, ddof=1)) if repeats > 1 else 0.0
    report = RtfReport(
        batch_size=batch_size,
        pattern=pattern.spec,
        params=model.num_parameters(),
        precision=dtype,
        audio_seconds=audio_seconds,
        repeats=repeats,
        wall_seconds=walls,
        inverse_rtf=mean,
        inverse_rtf_std=std,
        noise_band=std / mean if mean > 0 else 0.0,
        hardware=hardware_info(),
    )
    log.info(
        "RTF bench: %.1f audio-s/wall-s (+/- %.1f%%) batch=%d pattern=%s params=%d %s",
        mean, 100 * report.noise_band, batch_size, pattern.spec, report.params, dtype,
    )
    return report
