from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import pandas as pd

from core.constants import PatternKind
from encoder import AttentionPattern

MIN_SEEDS = 3
MIN_SURVIVING_SEEDS = 2


@dataclass(frozen=True)
class LongFormArm:
    label: str
    pattern: str
    num_layers: int

    def __post_init__(self):
        object.__setattr__(self, "pattern", AttentionPattern.parse(self.pattern).spec)
        if self.num_layers < 1:
            raise ValueError(f"arm {self.label!r}: num_layers must be >= 1, got {self.num_layers}")
        if not self.label or any(c in self.label for c in "/\\\t "):
            raise ValueError(f"arm label must be a non-empty path-safe word, got {self.label!r}")

    @property
    def attention(self) -> AttentionPattern:
        return AttentionPattern.parse(self.pattern)


@dataclass(frozen=True)
class LongFormExperimentSpec:
    """Short-segment training versus k-fold concatenated evaluation, per arm and seed."""

    arms: Tuple[LongFormArm, ...] = (
        LongFormArm("chunk", "chunk:25", 6),
        LongFormArm("local", "local:8:8", 6),
    )
    seeds: Tuple[int, ...] = (0, 1, 2)
    train_segment_seconds: float = 3.0
    concat_factor: int = 10
    steps: int = 400
    eval_every: int = 100
    tolerance: float = 0.05
    overrides: Tuple[str, ...] = ()

    def __post_init__(self):
        if len(self.seeds) < MIN_SEEDS or len(set(self.seeds)) != len(self.seeds):
            raise ValueError(f"need at least {MIN_SEEDS} distinct seeds, got {list(self.seeds)}")
        labels = [a.label for a in self.arms]
        if len(self.arms) < 2 or len(set(labels)) != len(labels):
            raise ValueError(f"need at least two arms with unique labels, got {labels}")
        if self.concat_factor < 1:
            raise ValueError(f"concat_factor must be >= 1, got {self.concat_factor}")
        if self.train_segment_seconds <= 0:
            raise ValueError(f"train_segment_seconds must be positive, got {self.train_segment_seconds}")
        if self.steps < 1 or self.eval_every < 1:
            raise ValueError(f"steps and eval_every must be positive, got {self.steps} and {self.eval_every}")

    @property
    def eval_seconds(self) -> float:
        return self.concat_factor * self.train_segment_seconds

    def local_arms(self) -> List[LongFormArm]:
        return [a for a in self.arms if a.attention.kind is PatternKind.LOCAL]


@dataclass(frozen=True)
class RunOutcome:
    arm: str
    seed: int
    pattern: str
    num_layers: int
    excluded: bool
    reason: str = ""
    checkpoint: Optional[str] = None
    short: Dict[str, float] = field(default_factory=dict)
    long: Dict[str, float] = field(default_factory=dict)

    def row(self) -> Dict[str, object]:
        out: Dict[str, object] = {
            "arm": self.arm,
            "seed": self.seed,
            "pattern": self.pattern,
            "num_layers": self.num_layers,
            "status": "excluded" if self.excluded else "ok",
            "reason": self.reason,
        }
        for prefix, stats in (("short", self.short), ("long", self.long)):
            for k in ("wer", "cer", "deletion_share", "substitutions", "deletions", "insertions", "words"):
                out[f"{prefix}_{k}"] = stats.get(k, float("nan"))
        return out


@dataclass(frozen=True, eq=False)
class LongFormReport:
    runs: pd.DataFrame
    summary: pd.DataFrame
    plot: pd.DataFrame

    def median(self, arm: str, column: str) -> float:
        hit = self.summary[self.summary["arm"] == arm]
        if hit.empty:
            raise ValueError(f"no arm {arm!r}. Available: {self.summary['arm'].tolist()}")
        return float(hit.iloc[0][column])
