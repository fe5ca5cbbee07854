from __future__ import annotations

from dataclasses import dataclass

DEFAULT_MIN_WPS = 0.5
DEFAULT_MAX_WPS = 6.0


def word_count(text: str) -> int:
    return len(text.split())


@dataclass(frozen=True)
class PseudoLabeledItem:
    audio: str
    hypothesis: str
    duration: float
    language: str = "-"
    kept: bool = False

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError(f"{self.audio}: duration must be positive, got {self.duration}")

    @property
    def words_per_second(self) -> float:
        return word_count(self.hypothesis) / self.duration
