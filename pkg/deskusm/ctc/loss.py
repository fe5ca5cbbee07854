from __future__ import annotations

import logging
from typing import Sequence, Tuple, Union

import numpy as np

from core.constants import BLANK_ID
from numerics import Function, ShapeError, Tensor

from .models import CtcResult, LabelSequence

log = logging.getLogger(__name__)

_NEG_INF = -np.inf


def _ids(target: Union[LabelSequence, Sequence[int]]) -> Tuple[int, ...]:
    return target.ids if isinstance(target, LabelSequence) else tuple(int(i) for i in target)


def ctc_min_frames(target: Union[LabelSequence, Sequence[int]]) -> int:
    """Shortest input that can emit `target`: one frame per label plus a blank between equal neighbours."""
    ids = _ids(target)
    repeats = sum(1 for a, b in zip(ids, ids[1:]) if a == b)
    return len(ids) + repeats


def _extended(ids: Tuple[int, ...]) -> np.ndarray:
    ext = np.full(2 * len(ids) + 1, BLANK_ID, dtype=np.int64)
    ext[1::2] = ids
    return ext


def _skip_allowed(ext: np.ndarray) -> np.ndarray:
    """skip[s]: a path may jump from s - 2 straight to s."""
    skip = np.zeros(len(ext), dtype=bool)
    skip[2:] = (ext[2:] != BLANK_ID) & (ext[2:] != ext[:-2])
    return skip


def _shift(a: np.ndarray, k: int) -> np.ndarray:
    out = np.full_like(a, _NEG_INF)
    if k < len(a):
        out[k:] = a[: len(a) - k]
    return out


def _unshift(a: np.ndarray, k: int) -> np.ndarray:
    out = np.full_like(a, _NEG_INF)
    if k < len(a):
        out[: len(a) - k] = a[k:]
    return out


def _forward_backward(lp: np.ndarray, ids: Tuple[int, ...]):
    t_len = lp.shape[0]
    ext = _extended(ids)
    s_len = len(ext)
    skip = _skip_allowed(ext)
    emit = lp[:, ext]

    alpha = np.full((t_len, s_len), _NEG_INF)
    alpha[0, 0] = emit[0, 0]
    if s_len > 1:
        alpha[0, 1] = emit[0, 1]
    for t in range(1, t_len):
        prev = alpha[t - 1]
        acc = np.logaddexp(prev, _shift(prev, 1))
        acc = np.where(skip, np.logaddexp(acc, _shift(prev, 2)), acc)
        alpha[t] = acc + emit[t]

    # beta[t, s]: log-probability of finishing from state s at t, excluding the emission at t.
    beta = np.full((t_len, s_len), _NEG_INF)
    beta[-1, -1] = 0.0
    if s_len > 1:
        beta[-1, -2] = 0.0
    for t in range(t_len - 2, -1, -1):
        nxt = beta[t + 1] + emit[t + 1]
        acc = np.logaddexp(nxt, _unshift(nxt, 1))
        acc = np.logaddexp(acc, np.where(_unshift(skip, 2), _unshift(nxt, 2), _NEG_INF))
        beta[t] = acc

    ends = alpha[-1, -1] if s_len == 1 else np.logaddexp(alpha[-1, -1], alpha[-1, -2])
    return ext, alpha, beta, float(ends)


class CtcNll(Function):
    """Negative log-likelihood of a label sequence under per-frame log-probabilities (T x V)."""

    def forward(self, log_probs, ids=()):
        self.ids = ids
        self.ext, alpha, beta, self.log_z = _forward_backward(np.asarray(log_probs, dtype=np.float64), ids)
        self.log_occupancy = alpha + beta - self.log_z
        return np.asarray(-self.log_z)

    def backward(self, grad):
        lp = self.parents[0].data
        occ = np.zeros(lp.shape, dtype=np.float64)
        # np.add.at accumulates states that share a token id.
        np.add.at(occ.T, self.ext, np.exp(self.log_occupancy).T)
        return ((-float(grad) * occ).astype(lp.dtype, copy=False),)


def ctc_loss(log_probs: Tensor, target: Union[LabelSequence, Sequence[int]]) -> CtcResult:
    if log_probs.ndim != 2:
        raise ShapeError(f"ctc_loss expects T x V log-probabilities, got {log_probs.shape}")
    ids = _ids(target)
    t_len, vocab = log_probs.shape
    if ids and max(ids) >= vocab:
        raise ShapeError(f"target id {max(ids)} outside vocabulary of size {vocab}")

    need = ctc_min_frames(ids)
    if t_len < need or t_len == 0:
        if not ids and t_len == 0:
            return CtcResult(loss=Tensor(0.0))
        log.debug("ctc_loss: %d frames cannot emit %d labels (need %d)", t_len, len(ids), need)
        return CtcResult(loss=Tensor(np.inf), infeasible=True)
    return CtcResult(loss=CtcNll.apply(log_probs, ids=ids))
