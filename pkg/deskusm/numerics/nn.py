from __future__ import annotations

import copy
from typing import Dict, Iterator, List, Mapping, Optional, Tuple

import numpy as np

from . import ops
from .tensor import Tensor


class Module:
    """Container of named trainable tensors and child modules, kept in registration order."""

    def __init__(self):
        self._params: Dict[str, Tensor] = {}
        self._modules: Dict[str, "Module"] = {}

    def add_param(self, name: str, value: np.ndarray) -> Tensor:
        t = Tensor(np.array(value, dtype=np.float64), requires_grad=True, name=name)
        self._params[name] = t
        return t

    def add_module(self, name: str, module: "Module") -> "Module":
        self._modules[name] = module
        return module

    def named_parameters(self, prefix: str = "") -> List[Tuple[str, Tensor]]:
        out = [(f"{prefix}{name}", t) for name, t in self._params.items()]
        for name, child in self._modules.items():
            out.extend(child.named_parameters(f"{prefix}{name}."))
        return out

    def parameters(self) -> Iterator[Tensor]:
        for _, t in self.named_parameters():
            yield t

    def num_parameters(self) -> int:
        return sum(t.size for t in self.parameters())

    def zero_grad(self) -> None:
        for t in self.parameters():
            t.grad = None

    def freeze(self) -> None:
        for t in self.parameters():
            t.requires_grad = False

    def unfreeze(self) -> None:
        for t in self.parameters():
            t.requires_grad = True

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.named_parameters()}

    def load_state_dict(self, state: Mapping[str, np.ndarray], strict: bool = True) -> List[str]:
        own = dict(self.named_parameters())
        missing = [n for n in own if n not in state]
        mismatched = [
            f"{n}: checkpoint {tuple(np.shape(state[n]))} vs model {own[n].shape}"
            for n in own
            if n in state and tuple(np.shape(state[n])) != own[n].shape
        ]
        if mismatched:
            raise ValueError(f"Shape mismatch for arrays: {mismatched}")
        if strict and missing:
            raise ValueError(f"Checkpoint is missing arrays: {missing}")
        for name, t in own.items():
            if name in state:
                t.data = np.array(state[name], dtype=t.data.dtype)
        return missing

    def astype(self, dtype) -> "Module":
        clone = copy.deepcopy(self)
        for t in clone.parameters():
            t.data = t.data.astype(dtype)
            t.grad = None
        return clone


class Linear(Module):
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, bias: bool = True, zero_init: bool = False):
        super().__init__()
        if zero_init:
            w = np.zeros((in_dim, out_dim))
        else:
            limit = np.sqrt(6.0 / (in_dim + out_dim))
            w = rng.uniform(-limit, limit, size=(in_dim, out_dim))
        self.weight = self.add_param("weight", w)
        self.bias = self.add_param("bias", np.zeros(out_dim)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = ops.matmul(x, self.weight)
        return ops.add(y, self.bias) if self.bias is not None else y


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        super().__init__()
        self.eps = eps
        self.gamma = self.add_param("gamma", np.ones(dim))
        self.beta = self.add_param("beta", np.zeros(dim))

    def __call__(self, x: Tensor) -> Tensor:
        return ops.layer_norm(x, self.gamma, self.beta, eps=self.eps)


class Embedding(Module):
    def __init__(self, num: int, dim: int, rng: np.random.Generator, std: Optional[float] = None):
        super().__init__()
        self.table = self.add_param("table", rng.normal(0.0, std if std is not None else 1.0 / np.sqrt(dim), size=(num, dim)))

    def __call__(self, idx) -> Tensor:
        return ops.take(self.table, idx)
