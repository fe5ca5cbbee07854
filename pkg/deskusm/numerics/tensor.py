from __future__ import annotations

import logging
import threading
from contextlib import contextmanager
from typing import Callable, Dict, Iterator, List, Optional, Tuple, Union

import numpy as np

log = logging.getLogger(__name__)

_state = threading.local()

_DTYPES = {"float64": np.float64, "float32": np.float32}


class ShapeError(ValueError):
    pass


def grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


def default_dtype():
    return getattr(_state, "dtype", np.float64)


@contextmanager
def no_grad() -> Iterator[None]:
    prev = grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = prev


@contextmanager
def precision(name: str) -> Iterator[None]:
    """Switch the dtype of newly created tensors on this thread ("float64" or "float32")."""
    if name not in _DTYPES:
        raise ValueError(f"Unsupported precision: {name}. Expected one of {sorted(_DTYPES)}")
    prev = default_dtype()
    _state.dtype = _DTYPES[name]
    try:
        yield
    finally:
        _state.dtype = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_ctx")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.asarray(data, dtype=default_dtype())
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._ctx: Optional[Function] = None

    def __repr__(self) -> str:
        label = f" {self.name}" if self.name else ""
        return f"<Tensor{label} shape={self.shape} requires_grad={self.requires_grad}>"

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __add__(self, other):
        return _ops.add(self, _lift(other))

    def __radd__(self, other):
        return _ops.add(_lift(other), self)

    def __sub__(self, other):
        return _ops.sub(self, _lift(other))

    def __rsub__(self, other):
        return _ops.sub(_lift(other), self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return _ops.scale(self, float(other))
        return _ops.mul(self, _lift(other))

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return _ops.neg(self)

    def __matmul__(self, other):
        return _ops.matmul(self, _lift(other))

    def sum(self, axis=None) -> "Tensor":
        return _ops.sum(self, axis=axis)

    def mean(self, axis=None) -> "Tensor":
        return _ops.mean(self, axis=axis)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return _ops.reshape(self, shape)

    def transpose(self, *axes) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return _ops.transpose(self, axes or None)

    def exp(self) -> "Tensor":
        return _ops.exp(self)

    def log(self) -> "Tensor":
        return _ops.log(self)

    def backward(self) -> None:
        if self.data.size != 1:
            raise ShapeError(f"backward() needs a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            log.debug("backward() on a tensor outside any graph; nothing to do")
            return

        grads: Dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(_topological_order(self)):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            node.grad = np.array(g, copy=True) if node.grad is None else node.grad + g
            ctx = node._ctx
            if ctx is None:
                continue
            for parent, pg in zip(ctx.parents, ctx.backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                if pg.shape != parent.shape:
                    raise ShapeError(
                        f"{type(ctx).__name__}.backward produced gradient {pg.shape} for input {parent.shape}"
                    )
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg


def _topological_order(root: Tensor) -> List[Tensor]:
    order: List[Tensor] = []
    visited = set()
    stack: List[Tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        if node._ctx is not None:
            for parent in node._ctx.parents:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))
    return order


def _lift(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


class Function:
    """One recorded primitive: forward on raw arrays, backward returns one gradient per parent."""

    def __init__(self, *parents: Tensor):
        self.parents = parents

    def forward(self, *arrays: np.ndarray, **kwargs) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        raise NotImplementedError

    @classmethod
    def apply(cls, *parents: Tensor, **kwargs) -> Tensor:
        for p in parents:
            if not isinstance(p, Tensor):
                raise TypeError(f"{cls.__name__} expects Tensor inputs, got {type(p).__name__}")
        ctx = cls(*parents)
        out = ctx.forward(*[p.data for p in parents], **kwargs)
        requires = grad_enabled() and any(p.requires_grad for p in parents)
        result = Tensor(out, requires_grad=requires)
        if requires:
            result._ctx = ctx
        return result


def forward_backward(loss: Union[Tensor, Callable[[], Tensor]], accumulate: bool = False) -> float:
    """Evaluate a scalar loss expression and populate gradients of every leaf on its graph.

    Leaf gradients are reset first, so repeated calls give identical gradients. With
    `accumulate=True` they are added to whatever the leaves already hold.
    """
    if callable(loss) and not isinstance(loss, Tensor):
        loss = loss()
    if not isinstance(loss, Tensor):
        raise TypeError(f"loss expression must produce a Tensor, got {type(loss).__name__}")
    if not accumulate and loss.requires_grad:
        for node in _topological_order(loss):
            if node._ctx is None:
                node.grad = None
    loss.backward()
    return loss.item()


from . import ops as _ops  # noqa: E402
