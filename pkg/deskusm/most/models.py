from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np

from core.constants import MOST_BATCH_RATIO
from ctc import LabelSequence

TERMS = ("bestrq", "asr", "consistency", "reconstruction")


@dataclass(frozen=True)
class MostLossWeights:
    w_bestrq: float = 1.0
    w_asr: float = 1.0
    w_consistency: float = 1.0
    w_reconstruction: float = 1.0

    def __post_init__(self):
        values = self.as_dict()
        negative = {k: v for k, v in values.items() if v < 0}
        if negative:
            raise ValueError(f"MOST loss weights must be non-negative, got {negative}")
        if not any(v > 0 for v in values.values()):
            raise ValueError("at least one MOST loss weight must be positive")

    def as_dict(self) -> Dict[str, float]:
        return {
            "bestrq": self.w_bestrq,
            "asr": self.w_asr,
            "consistency": self.w_consistency,
            "reconstruction": self.w_reconstruction,
        }


@dataclass(frozen=True)
class MostBatchSizes:
    speech: int
    text: int
    paired: int

    @classmethod
    def scaled(cls, scale: float) -> "MostBatchSizes":
        """Fixed 4096/8192/1024 speech/text/paired proportions times one factor, each at least 1."""
        s, t, p = (max(1, int(round(r * scale))) for r in MOST_BATCH_RATIO)
        return cls(speech=s, text=t, paired=p)


@dataclass(frozen=True, eq=False)
class MostBatch:
    unlabeled_speech: List[np.ndarray] = field(default_factory=list)
    paired: List[Tuple[np.ndarray, LabelSequence]] = field(default_factory=list)
    unlabeled_text: List[LabelSequence] = field(default_factory=list)

    def check(self, sizes: MostBatchSizes) -> Dict[str, bool]:
        """Raise on a partial sub-batch; return which sub-batches are missing."""
        got = {"speech": len(self.unlabeled_speech), "paired": len(self.paired), "text": len(self.unlabeled_text)}
        want = {"speech": sizes.speech, "paired": sizes.paired, "text": sizes.text}
        wrong = {k: (got[k], want[k]) for k in got if got[k] not in (0, want[k])}
        if wrong:
            raise ValueError(f"MOST sub-batch sizes (got, configured) differ: {wrong}")
        return {k: got[k] == 0 for k in got}


@dataclass(frozen=True)
class MostStepResult:
    step: int
    losses: Dict[str, float]
    total: float
    gated: bool
    missing: Dict[str, bool]
    skipped_items: int = 0
    grad_contributions: Dict[str, Dict[str, float]] = field(default_factory=dict)
