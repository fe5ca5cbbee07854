from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Tuple

DEFAULT_TARGET_RATIO = 0.023


@dataclass(frozen=True)
class AdapterConfig:
    """bottleneck_dim 0 means: solve it from target_ratio when attaching."""

    bottleneck_dim: int = 0
    target_ratio: float = DEFAULT_TARGET_RATIO
    languages: Tuple[str, ...] = ()

    def __post_init__(self):
        if self.bottleneck_dim < 0:
            raise ValueError(f"bottleneck_dim must be >= 0, got {self.bottleneck_dim}")
        if not 0 < self.target_ratio < 1:
            raise ValueError(f"target_ratio must be in (0, 1), got {self.target_ratio}")
        if len(set(self.languages)) != len(self.languages):
            raise ValueError(f"duplicate adapter languages: {list(self.languages)}")


@dataclass(frozen=True)
class AdapterReport:
    base_params: int
    adapter_params: int
    bottleneck_dim: int
    per_language: Dict[str, int] = field(default_factory=dict)

    @property
    def ratio(self) -> float:
        return self.adapter_params / self.base_params if self.base_params else 0.0
