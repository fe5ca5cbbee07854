from __future__ import annotations

import logging
from typing import Dict, Mapping

import numpy as np

from core.constants import SUBSAMPLING_FACTOR
from numerics import ShapeError

from .models import BestRqStats, QuantizedTargets, RandomQuantizer

log = logging.getLogger(__name__)

STATS = BestRqStats()


def make_quantizer(
    d_in: int,
    d_emb: int = 16,
    num_codebooks: int = 16,
    codebook_size: int = 256,
    seed: int = 0,
) -> RandomQuantizer:
    if min(d_in, d_emb, num_codebooks, codebook_size) <= 0:
        raise ValueError(
            f"quantizer dims must be positive: d_in={d_in} d_emb={d_emb} "
            f"num_codebooks={num_codebooks} codebook_size={codebook_size}"
        )
    rng = np.random.default_rng(seed)
    projection = rng.normal(0.0, 1.0, size=(d_in, d_emb)) / np.sqrt(d_in)
    codebooks = rng.normal(0.0, 1.0, size=(num_codebooks, codebook_size, d_emb))
    q = RandomQuantizer(projection=projection, codebooks=codebooks)
    log.info(
        "Random quantizer: d_in=%d d_emb=%d books=%d codes=%d checksum=%s",
        d_in, d_emb, num_codebooks, codebook_size, q.checksum[:12],
    )
    return q


def verify_quantizer(q: RandomQuantizer) -> None:
    now = q.current_checksum()
    if now != q.checksum:
        raise RuntimeError(f"quantizer arrays changed after construction: {q.checksum[:12]} -> {now[:12]}")


def quantizer_state(q: RandomQuantizer) -> Dict[str, np.ndarray]:
    return {"quantizer.projection": np.array(q.projection), "quantizer.codebooks": np.array(q.codebooks)}


def quantizer_from_state(state: Mapping[str, np.ndarray]) -> RandomQuantizer:
    try:
        return RandomQuantizer(
            projection=np.array(state["quantizer.projection"], dtype=np.float64),
            codebooks=np.array(state["quantizer.codebooks"], dtype=np.float64),
        )
    except KeyError as e:
        raise ValueError(f"state has no quantizer array {e}") from e


def stack_frames(frames: np.ndarray, factor: int = SUBSAMPLING_FACTOR) -> np.ndarray:
    """(T, D) -> (T // factor, factor * D); trailing frames that do not fill a stack are dropped."""
    t = (frames.shape[0] // factor) * factor
    return frames[:t].reshape(t // factor, factor * frames.shape[1])


def quantize(frames: np.ndarray, q: RandomQuantizer) -> QuantizedTargets:
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[1] != q.d_in:
        raise ShapeError(f"quantize expects T x {q.d_in} stacked frames, got {frames.shape}")

    projected = frames @ q.projection
    norms = np.linalg.norm(projected, axis=-1, keepdims=True)
    degenerate = norms[:, 0] == 0
    unit = np.divide(projected, norms, out=np.zeros_like(projected), where=norms > 0)
    books = q.codebooks / np.linalg.norm(q.codebooks, axis=-1, keepdims=True)

    cosine = np.einsum("td,ncd->ntc", unit, books)
    labels = np.argmax(cosine, axis=-1).astype(np.int64)
    labels[:, degenerate] = 0

    n_bad = int(degenerate.sum())
    if n_bad:
        STATS.add(degenerate_frames=n_bad)
        log.warning("quantize: %d zero-norm projected frame(s) assigned code 0", n_bad)
    return QuantizedTargets(labels=labels, degenerate_frames=n_bad)
