from __future__ import annotations

import logging
from math import gcd
from pathlib import Path
from typing import Union

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

from .models import AudioClip

log = logging.getLogger(__name__)

_PCM16_SCALE = 32768.0


def read_wav(path: Union[str, Path]) -> AudioClip:
    rate, data = wavfile.read(str(path))
    if data.dtype != np.int16:
        raise ValueError(f"{path}: only PCM-16 WAV is supported, got sample type {data.dtype}")
    if data.ndim != 1:
        raise ValueError(f"{path}: only mono WAV is supported, got {data.shape[1]} channels")
    return AudioClip(samples=data.astype(np.float64) / _PCM16_SCALE, sample_rate=int(rate))


def write_wav(path: Union[str, Path], clip: AudioClip) -> None:
    pcm = np.round(np.clip(clip.samples, -1.0, 1.0 - 1.0 / _PCM16_SCALE) * _PCM16_SCALE).astype(np.int16)
    wavfile.write(str(path), int(clip.sample_rate), pcm)


def resample(clip: AudioClip, target_rate: int) -> AudioClip:
    """Band-limited polyphase resampling; output length is round(n * target / source)."""
    if target_rate <= 0:
        raise ValueError(f"target_rate must be positive, got {target_rate}")
    n = len(clip.samples)
    if clip.sample_rate == target_rate:
        return AudioClip(samples=clip.samples.copy(), sample_rate=target_rate)
    if n == 0:
        return AudioClip(samples=np.zeros(0), sample_rate=target_rate)

    g = gcd(int(clip.sample_rate), int(target_rate))
    up, down = int(target_rate) // g, int(clip.sample_rate) // g
    out = resample_poly(clip.samples, up, down)

    want = int(round(n * target_rate / clip.sample_rate))
    if len(out) > want:
        out = out[:want]
    elif len(out) < want:
        out = np.pad(out, (0, want - len(out)))
    log.debug("resampled %d samples %d Hz -> %d samples %d Hz", n, clip.sample_rate, len(out), target_rate)
    return AudioClip(samples=out, sample_rate=int(target_rate))
