from __future__ import annotations

from itertools import product
from typing import Sequence, Tuple, Union

import numpy as np

from numerics import Tensor

from .decode import collapse
from .models import LabelSequence

MAX_FRAMES = 8
MAX_VOCAB = 5


def ctc_brute_force(log_probs: Union[Tensor, np.ndarray], target: Union[LabelSequence, Sequence[int]]) -> float:
    """Exhaustive sum over all V**T paths that collapse to `target`."""
    lp = np.asarray(log_probs.data if isinstance(log_probs, Tensor) else log_probs, dtype=np.float64)
    t_len, vocab = lp.shape
    if t_len > MAX_FRAMES or vocab > MAX_VOCAB:
        raise ValueError(f"brute-force CTC limited to T <= {MAX_FRAMES}, V <= {MAX_VOCAB}; got T={t_len}, V={vocab}")
    want: Tuple[int, ...] = target.ids if isinstance(target, LabelSequence) else tuple(int(i) for i in target)

    frames = np.arange(t_len)
    scores = [
        float(lp[frames, list(path)].sum())
        for path in product(range(vocab), repeat=t_len)
        if collapse(path) == want
    ]
    if not scores:
        return float("inf")
    return -float(np.logaddexp.reduce(np.asarray(scores)))
