from __future__ import annotations

import logging
import warnings
from functools import lru_cache

import librosa
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import get_window

from core.constants import ENERGY_FLOOR, FRAME_HOP, FRAME_WINDOW, MEL_FMAX, MEL_FMIN, N_MELS, SAMPLE_RATE

from .models import AudioClip, FeatureSequence

log = logging.getLogger(__name__)

WINDOW_SAMPLES = int(round(FRAME_WINDOW * SAMPLE_RATE))
HOP_SAMPLES = int(round(FRAME_HOP * SAMPLE_RATE))
N_FFT = 512


def empty_filters(fb: np.ndarray) -> list:
    return np.flatnonzero(fb.sum(axis=1) == 0).tolist()


@lru_cache(maxsize=1)
def mel_filterbank() -> np.ndarray:
    """(N_MELS, N_FFT // 2 + 1) HTK-scale triangular filters between MEL_FMIN and MEL_FMAX.

    The narrowest low filters fall between FFT bins; those channels always read the log floor.
    """
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="Empty filters", category=UserWarning)
        fb = librosa.filters.mel(
            sr=SAMPLE_RATE,
            n_fft=N_FFT,
            n_mels=N_MELS,
            fmin=MEL_FMIN,
            fmax=MEL_FMAX,
            htk=True,
            norm=None,
            dtype=np.float64,
        )
    empty = empty_filters(fb)
    if empty:
        log.warning("Mel filters %s cover no FFT bin at n_fft=%d; they output the log floor", empty, N_FFT)
    fb.setflags(write=False)
    return fb


@lru_cache(maxsize=1)
def _hann() -> np.ndarray:
    w = get_window("hann", WINDOW_SAMPLES, fftbins=True).astype(np.float64)
    w.setflags(write=False)
    return w


def num_frames(num_samples: int) -> int:
    if num_samples < WINDOW_SAMPLES:
        return 0
    return 1 + (num_samples - WINDOW_SAMPLES) // HOP_SAMPLES


def log_mel(clip: AudioClip) -> FeatureSequence:
    if clip.sample_rate != SAMPLE_RATE:
        raise ValueError(f"log_mel expects {SAMPLE_RATE} Hz audio, got {clip.sample_rate} Hz; resample first")
    t = num_frames(len(clip.samples))
    if t == 0:
        return FeatureSequence(frames=np.zeros((0, N_MELS)))

    frames = sliding_window_view(np.asarray(clip.samples, dtype=np.float64), WINDOW_SAMPLES)[::HOP_SAMPLES][:t]
    spectrum = np.fft.rfft(frames * _hann(), n=N_FFT, axis=-1)
    power = spectrum.real ** 2 + spectrum.imag ** 2
    energies = power @ mel_filterbank().T
    return FeatureSequence(frames=np.log(energies + ENERGY_FLOOR))


def normalize_features(frames: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Per-utterance mean/variance normalization over time."""
    if frames.shape[0] == 0:
        return frames.copy()
    mu = frames.mean(axis=0, keepdims=True)
    sd = frames.std(axis=0, keepdims=True)
    return (frames - mu) / (sd + eps)
