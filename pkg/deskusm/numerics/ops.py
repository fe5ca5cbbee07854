from __future__ import annotations

from typing import Optional, Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from .tensor import Function, ShapeError, Tensor


def _check_broadcast(a_shape: Tuple[int, ...], b_shape: Tuple[int, ...], op: str) -> None:
    if a_shape == b_shape:
        return
    small, big = (b_shape, a_shape) if len(b_shape) <= len(a_shape) else (a_shape, b_shape)
    if len(small) < len(big) and big[len(big) - len(small):] == small:
        return
    raise ShapeError(f"{op}: shapes {a_shape} and {b_shape} differ beyond the leading batch dimensions")


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    lead = grad.ndim - len(shape)
    return grad.sum(axis=tuple(range(lead)))


class Add(Function):
    def forward(self, a, b):
        _check_broadcast(a.shape, b.shape, "add")
        return a + b

    def backward(self, grad):
        a, b = self.parents
        return _unbroadcast(grad, a.shape), _unbroadcast(grad, b.shape)


class Sub(Function):
    def forward(self, a, b):
        _check_broadcast(a.shape, b.shape, "sub")
        return a - b

    def backward(self, grad):
        a, b = self.parents
        return _unbroadcast(grad, a.shape), -_unbroadcast(grad, b.shape)


class Mul(Function):
    def forward(self, a, b):
        _check_broadcast(a.shape, b.shape, "mul")
        return a * b

    def backward(self, grad):
        a, b = self.parents
        return _unbroadcast(grad * b.data, a.shape), _unbroadcast(grad * a.data, b.shape)


class Neg(Function):
    def forward(self, x):
        return -x

    def backward(self, grad):
        return (-grad,)


class Scale(Function):
    def forward(self, x, factor: float = 1.0):
        self.factor = factor
        return x * factor

    def backward(self, grad):
        return (grad * self.factor,)


class MatMul(Function):
    def forward(self, a, b):
        if a.ndim < 2 or b.ndim < 2:
            raise ShapeError(f"matmul needs matrices, got {a.shape} @ {b.shape}")
        if a.shape[-1] != b.shape[-2]:
            raise ShapeError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
        if b.ndim > 2 and a.shape[:-2] != b.shape[:-2]:
            raise ShapeError(f"matmul batch dimensions differ: {a.shape} @ {b.shape}")
        return a @ b

    def backward(self, grad):
        a, b = (p.data for p in self.parents)
        ga = grad @ np.swapaxes(b, -1, -2)
        if b.ndim == 2:
            k, m = b.shape
            gb = a.reshape(-1, k).T @ grad.reshape(-1, m)
        else:
            gb = np.swapaxes(a, -1, -2) @ grad
        return ga, gb


class Transpose(Function):
    def forward(self, x, axes=None):
        self.axes = tuple(axes) if axes is not None else tuple(reversed(range(x.ndim)))
        if sorted(self.axes) != list(range(x.ndim)):
            raise ShapeError(f"transpose axes {self.axes} do not match shape {x.shape}")
        return np.transpose(x, self.axes)

    def backward(self, grad):
        return (np.transpose(grad, np.argsort(self.axes)),)


class Reshape(Function):
    def forward(self, x, shape=()):
        try:
            return x.reshape(shape)
        except ValueError:
            raise ShapeError(f"cannot reshape {x.shape} into {tuple(shape)}") from None

    def backward(self, grad):
        return (grad.reshape(self.parents[0].shape),)


class Sum(Function):
    def forward(self, x, axis=None):
        self.axis = axis
        return np.sum(x, axis=axis)

    def backward(self, grad):
        shape = self.parents[0].shape
        if self.axis is not None:
            grad = np.expand_dims(grad, self.axis)
        return (np.broadcast_to(grad, shape).copy(),)


class Exp(Function):
    def forward(self, x):
        self.out = np.exp(x)
        return self.out

    def backward(self, grad):
        return (grad * self.out,)


class Log(Function):
    def forward(self, x):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.log(x)

    def backward(self, grad):
        return (grad / self.parents[0].data,)


class Sigmoid(Function):
    def forward(self, x):
        self.out = expit(x)
        return self.out

    def backward(self, grad):
        s = self.out
        return (grad * s * (1.0 - s),)


class Swish(Function):
    def forward(self, x):
        self.s = expit(x)
        return x * self.s

    def backward(self, grad):
        x = self.parents[0].data
        s = self.s
        return (grad * (s + x * s * (1.0 - s)),)


class Softmax(Function):
    def forward(self, x, axis=-1):
        self.axis = axis
        e = np.exp(x - np.max(x, axis=axis, keepdims=True))
        self.out = e / np.sum(e, axis=axis, keepdims=True)
        return self.out

    def backward(self, grad):
        y = self.out
        return (y * (grad - np.sum(grad * y, axis=self.axis, keepdims=True)),)


class LogSoftmax(Function):
    def forward(self, x, axis=-1):
        self.axis = axis
        shifted = x - np.max(x, axis=axis, keepdims=True)
        lse = np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))
        self.out = shifted - lse
        return self.out

    def backward(self, grad):
        p = np.exp(self.out)
        return (grad - p * np.sum(grad, axis=self.axis, keepdims=True),)


class LogSumExp(Function):
    def forward(self, x, axis=-1):
        self.axis = axis
        m = np.max(x, axis=axis, keepdims=True)
        lse = m + np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True))
        self.weights = np.exp(x - lse)
        return np.squeeze(lse, axis=axis)

    def backward(self, grad):
        return (np.expand_dims(grad, self.axis) * self.weights,)


class LayerNorm(Function):
    def forward(self, x, gamma, beta, eps=1e-5):
        d = x.shape[-1]
        if gamma.shape != (d,) or beta.shape != (d,):
            raise ShapeError(f"layer_norm: input {x.shape} with gamma {gamma.shape} / beta {beta.shape}")
        mu = x.mean(axis=-1, keepdims=True)
        var = x.var(axis=-1, keepdims=True)
        self.inv = 1.0 / np.sqrt(var + eps)
        self.xhat = (x - mu) * self.inv
        return self.xhat * gamma + beta

    def backward(self, grad):
        gamma = self.parents[1].data
        xhat, inv = self.xhat, self.inv
        n = xhat.shape[-1]
        dxhat = grad * gamma
        dx = (inv / n) * (
            n * dxhat
            - dxhat.sum(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True)
        )
        lead = tuple(range(grad.ndim - 1))
        return dx, (grad * xhat).sum(axis=lead), grad.sum(axis=lead)


class Conv1d(Function):
    """Strided 1-D convolution over the time axis of (..., T, C_in) with weights (K, C_in, C_out)."""

    def forward(self, x, w, stride=1, padding=0):
        if x.ndim < 2 or w.ndim != 3 or x.shape[-1] != w.shape[1]:
            raise ShapeError(f"conv1d: input {x.shape} incompatible with weights {w.shape}")
        k = w.shape[0]
        self.stride, self.padding = stride, padding
        pad = [(0, 0)] * x.ndim
        pad[-2] = (padding, padding)
        xp = np.pad(x, pad) if padding else x
        if xp.shape[-2] < k:
            raise ShapeError(f"conv1d: {x.shape[-2]} frames shorter than kernel {k} (padding {padding})")
        self.xp_shape = xp.shape
        self.windows = sliding_window_view(xp, k, axis=-2)[..., ::stride, :, :]
        lead = self.windows.shape[:-3]
        flat = self.windows.reshape((-1,) + self.windows.shape[-3:])
        out = np.einsum("btck,kco->bto", flat, w, optimize=True)
        return out.reshape(lead + out.shape[1:])

    def backward(self, grad):
        x, w = (p.data for p in self.parents)
        k = w.shape[0]
        t_out = grad.shape[-2]
        flat_w = self.windows.reshape((-1,) + self.windows.shape[-3:])
        flat_g = grad.reshape((-1,) + grad.shape[-2:])
        gw = np.einsum("btck,bto->kco", flat_w, flat_g, optimize=True)
        gxp = np.zeros(self.xp_shape, dtype=grad.dtype)
        span = self.stride * (t_out - 1) + 1
        for j in range(k):
            gxp[..., j:j + span:self.stride, :] += grad @ w[j].T
        if self.padding:
            gxp = gxp[..., self.padding:self.padding + x.shape[-2], :]
        return gxp, gw


class DepthwiseConv1d(Function):
    """Per-channel 'same' convolution over time of (..., T, C) with weights (K, C), K odd."""

    def forward(self, x, w):
        k = w.shape[0]
        if w.ndim != 2 or w.shape[1] != x.shape[-1] or k % 2 == 0:
            raise ShapeError(f"depthwise_conv1d: input {x.shape} incompatible with weights {w.shape}")
        half = (k - 1) // 2
        pad = [(0, 0)] * x.ndim
        pad[-2] = (half, half)
        xp = np.pad(x, pad)
        self.xp_shape = xp.shape
        self.windows = sliding_window_view(xp, k, axis=-2)
        return np.einsum("...tck,kc->...tc", self.windows, w, optimize=True)

    def backward(self, grad):
        x, w = (p.data for p in self.parents)
        k = w.shape[0]
        half = (k - 1) // 2
        t = x.shape[-2]
        flat_w = self.windows.reshape((-1,) + self.windows.shape[-3:])
        gw = np.einsum("btck,btc->kc", flat_w, grad.reshape((-1,) + grad.shape[-2:]), optimize=True)
        gxp = np.zeros(self.xp_shape, dtype=grad.dtype)
        for j in range(k):
            gxp[..., j:j + t, :] += grad * w[j]
        return gxp[..., half:half + t, :], gw


class Take(Function):
    """Row lookup table[idx] along axis 0; repeated indices accumulate in the backward pass."""

    def forward(self, table, idx=None):
        self.idx = np.asarray(idx, dtype=np.int64)
        if self.idx.size and (self.idx.min() < 0 or self.idx.max() >= table.shape[0]):
            raise ShapeError(f"take: indices outside [0, {table.shape[0]}) for table {table.shape}")
        return table[self.idx]

    def backward(self, grad):
        g = np.zeros_like(self.parents[0].data)
        np.add.at(g, self.idx, grad)
        return (g,)


class Pick(Function):
    """Select one entry per row along the last axis: out[...] = x[..., idx[...]]."""

    def forward(self, x, idx=None):
        self.idx = np.asarray(idx, dtype=np.int64)
        if self.idx.shape != x.shape[:-1]:
            raise ShapeError(f"pick: indices {self.idx.shape} do not match rows of {x.shape}")
        if self.idx.size and (self.idx.min() < 0 or self.idx.max() >= x.shape[-1]):
            raise ShapeError(f"pick: indices outside [0, {x.shape[-1]})")
        return np.take_along_axis(x, self.idx[..., None], axis=-1)[..., 0]

    def backward(self, grad):
        g = np.zeros_like(self.parents[0].data)
        np.put_along_axis(g, self.idx[..., None], grad[..., None], axis=-1)
        return (g,)


class MaskedSum(Function):
    def forward(self, x, mask=None):
        self.mask = np.asarray(mask, dtype=bool)
        if self.mask.shape != x.shape:
            raise ShapeError(f"masked_sum: mask {self.mask.shape} does not match {x.shape}")
        return np.sum(x, where=self.mask)

    def backward(self, grad):
        return (grad * self.mask,)


class Repeat(Function):
    def forward(self, x, factor=1):
        self.factor = factor
        return np.repeat(x, factor, axis=0)

    def backward(self, grad):
        shape = self.parents[0].shape
        return (grad.reshape((shape[0], self.factor) + shape[1:]).sum(axis=1),)


class MaskedReplace(Function):
    """Rows flagged in `rows` are replaced by the matching rows of a constant `fill`."""

    def forward(self, x, rows=None, fill=None):
        self.rows = np.asarray(rows, dtype=bool)
        fill = np.asarray(fill, dtype=x.dtype)
        if self.rows.shape != x.shape[:1] or fill.shape != x.shape:
            raise ShapeError(f"masked_replace: rows {self.rows.shape} / fill {fill.shape} vs input {x.shape}")
        keep = ~self.rows.reshape((-1,) + (1,) * (x.ndim - 1))
        self.keep = keep
        return np.where(keep, x, fill)

    def backward(self, grad):
        return (grad * self.keep,)


def add(a: Tensor, b: Tensor) -> Tensor:
    return Add.apply(a, b)


def sub(a: Tensor, b: Tensor) -> Tensor:
    return Sub.apply(a, b)


def mul(a: Tensor, b: Tensor) -> Tensor:
    return Mul.apply(a, b)


def neg(x: Tensor) -> Tensor:
    return Neg.apply(x)


def scale(x: Tensor, factor: float) -> Tensor:
    return Scale.apply(x, factor=float(factor))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    return MatMul.apply(a, b)


def transpose(x: Tensor, axes: Optional[Sequence[int]] = None) -> Tensor:
    return Transpose.apply(x, axes=axes)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    return Reshape.apply(x, shape=tuple(shape))


def sum(x: Tensor, axis=None) -> Tensor:  # noqa: A001
    return Sum.apply(x, axis=axis)


def mean(x: Tensor, axis=None) -> Tensor:
    n = x.size if axis is None else int(np.prod([x.shape[a] for a in np.atleast_1d(axis)]))
    return scale(sum(x, axis=axis), 1.0 / max(n, 1))


def exp(x: Tensor) -> Tensor:
    return Exp.apply(x)


def log(x: Tensor) -> Tensor:
    return Log.apply(x)


def sigmoid(x: Tensor) -> Tensor:
    return Sigmoid.apply(x)


def swish(x: Tensor) -> Tensor:
    return Swish.apply(x)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    return Softmax.apply(x, axis=axis)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    return LogSoftmax.apply(x, axis=axis)


def logsumexp(x: Tensor, axis: int = -1) -> Tensor:
    return LogSumExp.apply(x, axis=axis)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    return LayerNorm.apply(x, gamma, beta, eps=eps)


def conv1d(x: Tensor, w: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    return Conv1d.apply(x, w, stride=stride, padding=padding)


def depthwise_conv1d(x: Tensor, w: Tensor) -> Tensor:
    return DepthwiseConv1d.apply(x, w)


def take(table: Tensor, idx) -> Tensor:
    return Take.apply(table, idx=idx)


def pick(x: Tensor, idx) -> Tensor:
    return Pick.apply(x, idx=idx)


def masked_sum(x: Tensor, mask) -> Tensor:
    return MaskedSum.apply(x, mask=mask)


def repeat(x: Tensor, factor: int) -> Tensor:
    return Repeat.apply(x, factor=int(factor))


def masked_replace(x: Tensor, rows, fill) -> Tensor:
    return MaskedReplace.apply(x, rows=rows, fill=fill)


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of integer labels under row-wise softmax of logits."""
    return neg(mean(pick(log_softmax(logits), labels)))


def mse(a: Tensor, b: Tensor) -> Tensor:
    d = sub(a, b)
    return mean(mul(d, d))
