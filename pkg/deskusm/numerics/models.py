from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple


@dataclass(frozen=True)
class GradReport:
    max_relative_error: float
    per_parameter_errors: Tuple[Tuple[str, float], ...]
    nonfinite_probes: Tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.nonfinite_probes
