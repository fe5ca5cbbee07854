from __future__ import annotations

from typing import Sequence, Tuple, Union

import numpy as np

from core.constants import BLANK_ID
from numerics import Tensor

from .models import LabelSequence


def collapse(path: Sequence[int]) -> Tuple[int, ...]:
    """Merge consecutive repeats, then drop blanks."""
    out = []
    prev = None
    for p in path:
        p = int(p)
        if p != prev and p != BLANK_ID:
            out.append(p)
        prev = p
    return tuple(out)


def ctc_greedy_decode(log_probs: Union[Tensor, np.ndarray]) -> LabelSequence:
    lp = log_probs.data if isinstance(log_probs, Tensor) else np.asarray(log_probs)
    if lp.shape[0] == 0:
        return LabelSequence()
    return LabelSequence(collapse(np.argmax(lp, axis=-1)))
