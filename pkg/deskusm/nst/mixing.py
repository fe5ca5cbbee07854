from __future__ import annotations

import logging
from fractions import Fraction
from typing import Any, Dict, Iterator, List, Sequence, Tuple

import numpy as np

from core.constants import Source

log = logging.getLogger(__name__)


class _Cycler:
    """Endless reshuffled pass over one source; the order of each epoch depends only on (seed, source, epoch)."""

    def __init__(self, items: Sequence[Any], seed: int, source_index: int):
        self.items = list(items)
        self.seed = seed
        self.source_index = source_index
        self.epoch = 0
        self._order = self._shuffle()
        self._pos = 0

    def _shuffle(self) -> np.ndarray:
        rng = np.random.default_rng([self.seed, self.source_index, self.epoch])
        return rng.permutation(len(self.items))

    def take(self, n: int) -> List[Any]:
        out = []
        while len(out) < n:
            if self._pos == len(self._order):
                self.epoch += 1
                self._order = self._shuffle()
                self._pos = 0
            out.append(self.items[self._order[self._pos]])
            self._pos += 1
        return out


class MixedStream:
    """Batches whose supervised share follows a cumulative floor quota of `ratio`.

    After k batches the supervised total is floor(k * batch_size * ratio), so every batch
    holds floor or ceil of batch_size * ratio supervised items and the long-run fraction is exact.
    """

    def __init__(self, supervised: Sequence[Any], pseudo: Sequence[Any], ratio: float, batch_size: int, seed: int):
        if not 0 < ratio <= 1:
            raise ValueError(f"mixing ratio must be in (0, 1], got {ratio}")
        if batch_size < 1:
            raise ValueError(f"batch_size must be positive, got {batch_size}")
        self.ratio = Fraction(str(ratio))
        self.batch_size = batch_size
        if not supervised:
            raise ValueError("supervised source is empty")
        if self.ratio < 1 and not pseudo:
            raise ValueError(f"pseudo-labelled source is empty but ratio is {ratio}")
        self._sources = {
            Source.SUPERVISED: _Cycler(supervised, seed, 0),
            Source.PSEUDO: _Cycler(pseudo, seed, 1),
        }
        self.batches = 0
        self.emitted = {Source.SUPERVISED: 0, Source.PSEUDO: 0}

    @property
    def epochs(self) -> Dict[str, int]:
        return {s.value: c.epoch for s, c in self._sources.items()}

    def next_batch(self) -> List[Tuple[Source, Any]]:
        k = self.batches
        quota = int(self.ratio * (k + 1) * self.batch_size) - int(self.ratio * k * self.batch_size)
        n_sup, n_pseudo = quota, self.batch_size - quota
        batch = [(Source.SUPERVISED, it) for it in self._sources[Source.SUPERVISED].take(n_sup)]
        batch += [(Source.PSEUDO, it) for it in self._sources[Source.PSEUDO].take(n_pseudo)]
        self.batches += 1
        self.emitted[Source.SUPERVISED] += n_sup
        self.emitted[Source.PSEUDO] += n_pseudo
        return batch

    def __iter__(self) -> Iterator[List[Tuple[Source, Any]]]:
        while True:
            yield self.next_batch()


def mix_datasets(
    supervised: Sequence[Any], pseudo: Sequence[Any], mixing_ratio: float, seed: int, batch_size: int = 8
) -> MixedStream:
    return MixedStream(supervised, pseudo, mixing_ratio, batch_size, seed)
