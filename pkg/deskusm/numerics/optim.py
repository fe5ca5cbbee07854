from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, List, Mapping, Sequence, Tuple

import numpy as np

from .tensor import Tensor

log = logging.getLogger(__name__)

NamedParams = Sequence[Tuple[str, Tensor]]


@dataclass(frozen=True)
class GroupSettings:
    learning_rate: float = 1e-3
    warmup_steps: int = 0
    beta1: float = 0.9
    beta2: float = 0.98
    eps: float = 1e-9

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.warmup_steps < 0:
            raise ValueError(f"warmup_steps must be >= 0, got {self.warmup_steps}")


def schedule(settings: GroupSettings, step: int) -> float:
    """Linear warmup to the peak rate, then inverse-square-root decay; step is 1-based."""
    if step <= 0:
        return 0.0
    w = settings.warmup_steps
    if w == 0:
        return settings.learning_rate
    return settings.learning_rate * min(step / w, (w / step) ** 0.5)


class Adam:
    """Adam with independent moment state, step counter and schedule per named parameter group."""

    def __init__(self, groups: Mapping[str, Tuple[NamedParams, GroupSettings]], clip_norm: float = 0.0):
        seen: Dict[int, str] = {}
        for gname, (params, _) in groups.items():
            for pname, t in params:
                if id(t) in seen:
                    raise ValueError(f"parameter {pname} is in groups {seen[id(t)]} and {gname}")
                seen[id(t)] = gname
        self.groups = {g: (list(p), s) for g, (p, s) in groups.items()}
        self.clip_norm = float(clip_norm)
        self.steps = {g: 0 for g in self.groups}
        self.m = {g: {n: np.zeros_like(t.data) for n, t in p} for g, (p, _) in self.groups.items()}
        self.v = {g: {n: np.zeros_like(t.data) for n, t in p} for g, (p, _) in self.groups.items()}

    def _params(self) -> List[Tensor]:
        return [t for params, _ in self.groups.values() for _, t in params]

    def zero_grad(self) -> None:
        for t in self._params():
            t.grad = None

    def grad_norm(self) -> float:
        total = 0.0
        for t in self._params():
            if t.grad is not None:
                total += float(np.sum(np.square(t.grad, dtype=np.float64)))
        return float(np.sqrt(total))

    def step(self) -> Dict[str, float]:
        """Apply one update; returns the learning rate used per group and the pre-clip gradient norm."""
        norm = self.grad_norm()
        factor = 1.0
        if self.clip_norm > 0 and norm > self.clip_norm:
            factor = self.clip_norm / norm

        rates: Dict[str, float] = {"grad_norm": norm}
        for gname, (params, s) in self.groups.items():
            self.steps[gname] += 1
            t = self.steps[gname]
            lr = schedule(s, t)
            rates[f"lr_{gname}"] = lr
            bc1 = 1.0 - s.beta1 ** t
            bc2 = 1.0 - s.beta2 ** t
            for pname, p in params:
                if p.grad is None:
                    continue
                g = p.grad * factor
                m = self.m[gname][pname]
                v = self.v[gname][pname]
                m *= s.beta1
                m += (1.0 - s.beta1) * g
                v *= s.beta2
                v += (1.0 - s.beta2) * g * g
                if lr == 0.0:
                    continue
                p.data = p.data - lr * (m / bc1) / (np.sqrt(v / bc2) + s.eps)
        return rates

    def state_dict(self) -> Dict[str, np.ndarray]:
        out: Dict[str, np.ndarray] = {}
        for g in self.groups:
            out[f"optim.{g}.step"] = np.asarray([self.steps[g]], dtype=np.float64)
            for n, arr in self.m[g].items():
                out[f"optim.{g}.m.{n}"] = arr.copy()
            for n, arr in self.v[g].items():
                out[f"optim.{g}.v.{n}"] = arr.copy()
        return out

    def load_state_dict(self, state: Mapping[str, np.ndarray]) -> None:
        missing = []
        for g in self.groups:
            key = f"optim.{g}.step"
            if key not in state:
                missing.append(key)
                continue
            self.steps[g] = int(np.asarray(state[key]).reshape(-1)[0])
            for kind, store in (("m", self.m[g]), ("v", self.v[g])):
                for n in store:
                    k = f"optim.{g}.{kind}.{n}"
                    if k not in state:
                        missing.append(k)
                    else:
                        store[n] = np.array(state[k], dtype=np.float64)
        if missing:
            raise ValueError(f"optimizer state is missing arrays: {missing[:8]}{' ...' if len(missing) > 8 else ''}")
