from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, Tuple

from core.constants import BLANK_ID, BLANK_SYMBOL
from numerics import Tensor


@dataclass(frozen=True)
class LabelSequence:
    ids: Tuple[int, ...] = ()

    def __post_init__(self):
        ids = tuple(int(i) for i in self.ids)
        if any(i <= BLANK_ID for i in ids):
            raise ValueError(f"label ids must be >= {BLANK_ID + 1} (no blanks), got {list(ids)}")
        object.__setattr__(self, "ids", ids)

    def __len__(self) -> int:
        return len(self.ids)


@dataclass(frozen=True)
class TokenVocab:
    """Graphemes in id order; id 0 is the blank, grapheme k has id k + 1."""

    symbols: Tuple[str, ...]
    blank_id: int = BLANK_ID
    _index: Dict[str, int] = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        symbols = tuple(self.symbols)
        if len(set(symbols)) != len(symbols):
            dupes = sorted({s for s in symbols if symbols.count(s) > 1})
            raise ValueError(f"vocabulary symbols must be unique, duplicates: {dupes}")
        if BLANK_SYMBOL in symbols:
            raise ValueError(f"blank symbol {BLANK_SYMBOL!r} cannot be a grapheme")
        if any(len(s) != 1 for s in symbols):
            raise ValueError(f"graphemes must be single characters, got {[s for s in symbols if len(s) != 1]}")
        object.__setattr__(self, "symbols", symbols)
        object.__setattr__(self, "_index", {s: i + 1 for i, s in enumerate(symbols)})

    @classmethod
    def from_texts(cls, texts: Iterable[str]) -> "TokenVocab":
        chars = set()
        for t in texts:
            chars.update(t)
        return cls(symbols=tuple(sorted(chars)))

    @property
    def size(self) -> int:
        return len(self.symbols) + 1

    def encode(self, text: str) -> LabelSequence:
        unknown = sorted({c for c in text if c not in self._index})
        if unknown:
            raise ValueError(f"characters not in vocabulary: {unknown}")
        return LabelSequence(tuple(self._index[c] for c in text))

    def decode(self, labels) -> str:
        ids = labels.ids if isinstance(labels, LabelSequence) else labels
        out = []
        for i in ids:
            if not 0 < i < self.size:
                raise ValueError(f"label id {i} outside [1, {self.size})")
            out.append(self.symbols[i - 1])
        return "".join(out)


@dataclass(frozen=True)
class CtcResult:
    loss: Tensor
    infeasible: bool = False

    @property
    def value(self) -> float:
        return self.loss.item()
