from __future__ import annotations

from typing import Any, Dict, Optional, Sequence, Tuple, Type

import numpy as np
from scipy.special import erf

from ..errors import ContractError, DimensionError
from .autodiff import ArrayLike, Function, Tensor

_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def _unbroadcast(g: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


class Add(Function):
    name = "add"

    def forward(self, a, b):
        self.shapes = (a.shape, b.shape)
        return a + b

    def backward(self, grad):
        sa, sb = self.shapes
        return _unbroadcast(grad, sa), _unbroadcast(grad, sb)


class Sub(Function):
    name = "sub"

    def forward(self, a, b):
        self.shapes = (a.shape, b.shape)
        return a - b

    def backward(self, grad):
        sa, sb = self.shapes
        return _unbroadcast(grad, sa), _unbroadcast(-grad, sb)


class Mul(Function):
    name = "mul"

    def forward(self, a, b):
        self.a, self.b = a, b
        return a * b

    def backward(self, grad):
        return _unbroadcast(grad * self.b, self.a.shape), _unbroadcast(grad * self.a, self.b.shape)


class MatMul(Function):
    name = "matmul"

    def forward(self, a, b):
        if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
            raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
        self.a, self.b = a, b
        return np.matmul(a, b)

    def backward(self, grad):
        ga = np.matmul(grad, np.swapaxes(self.b, -1, -2))
        gb = np.matmul(np.swapaxes(self.a, -1, -2), grad)
        return _unbroadcast(ga, self.a.shape), _unbroadcast(gb, self.b.shape)


class Transpose(Function):
    name = "transpose"

    def forward(self, a, axes=None):
        if axes is None:
            axes = tuple(range(a.ndim - 2)) + (a.ndim - 1, a.ndim - 2)
        self.axes = tuple(axes)
        return np.transpose(a, self.axes)

    def backward(self, grad):
        return (np.transpose(grad, np.argsort(self.axes)),)


class Reshape(Function):
    name = "reshape"

    def forward(self, a, shape=()):
        self.in_shape = a.shape
        return a.reshape(shape)

    def backward(self, grad):
        return (grad.reshape(self.in_shape),)


class GetItem(Function):
    name = "getitem"

    def forward(self, a, index=None):
        self.in_shape, self.index = a.shape, index
        return np.array(a[index])

    def backward(self, grad):
        out = np.zeros(self.in_shape)
        items = self.index if isinstance(self.index, tuple) else (self.index,)
        if all(i is None or i is Ellipsis or isinstance(i, (int, np.integer, slice)) for i in items):
            out[self.index] += grad
        else:
            # fancy indices may repeat
            np.add.at(out, self.index, grad)
        return (out,)


class Concat(Function):
    name = "concat"

    def forward(self, *arrays, axis=0):
        self.axis = axis
        self.sizes = [a.shape[axis] for a in arrays]
        return np.concatenate(arrays, axis=axis)

    def backward(self, grad):
        return tuple(np.split(grad, np.cumsum(self.sizes)[:-1], axis=self.axis))


class BroadcastTo(Function):
    name = "broadcast_to"

    def forward(self, a, shape=()):
        self.in_shape = a.shape
        return np.broadcast_to(a, shape).copy()

    def backward(self, grad):
        return (_unbroadcast(grad, self.in_shape),)


class SumAll(Function):
    name = "sum"

    def forward(self, a):
        self.in_shape = a.shape
        return np.array(a.sum())

    def backward(self, grad):
        return (np.full(self.in_shape, float(grad)),)


class MeanAll(Function):
    name = "mean"

    def forward(self, a):
        self.in_shape, self.n = a.shape, a.size
        return np.array(a.mean())

    def backward(self, grad):
        return (np.full(self.in_shape, float(grad) / self.n),)


class SoftmaxRows(Function):
    """Softmax over the last axis; entries where ``mask`` is False get probability 0."""

    name = "softmax_rows"

    def forward(self, a, mask=None):
        z = a if mask is None else np.where(mask, a, -np.inf)
        z = z - z.max(axis=-1, keepdims=True)
        e = np.exp(z)
        self.y = e / e.sum(axis=-1, keepdims=True)
        return self.y

    def backward(self, grad):
        y = self.y
        return (y * (grad - (grad * y).sum(axis=-1, keepdims=True)),)


class LayerNorm(Function):
    name = "layer_norm"

    def forward(self, x, gamma, beta, eps=1e-5):
        if gamma.shape != (x.shape[-1],) or beta.shape != (x.shape[-1],):
            raise DimensionError(
                f"layer_norm: gamma {gamma.shape} / beta {beta.shape} do not match last dim of {x.shape}"
            )
        mu = x.mean(axis=-1, keepdims=True)
        xc = x - mu
        var = (xc * xc).mean(axis=-1, keepdims=True)
        self.inv = 1.0 / np.sqrt(var + eps)
        self.xhat = xc * self.inv
        self.gamma, self.x_shape = gamma, x.shape
        return self.xhat * gamma + beta

    def backward(self, grad):
        d = self.x_shape[-1]
        xhat, inv = self.xhat, self.inv
        dxhat = grad * self.gamma
        dx = (inv / d) * (
            d * dxhat
            - dxhat.sum(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).sum(axis=-1, keepdims=True)
        )
        lead = tuple(range(grad.ndim - 1))
        return dx, (grad * xhat).sum(axis=lead), grad.sum(axis=lead)


class Gelu(Function):
    """Exact GELU, x * Phi(x)."""

    name = "gelu"

    def forward(self, x):
        self.x = x
        self.cdf = 0.5 * (1.0 + erf(x / _SQRT2))
        return x * self.cdf

    def backward(self, grad):
        x = self.x
        pdf = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
        return (grad * (self.cdf + x * pdf),)


class CrossEntropy(Function):
    """Mean negative log-likelihood of integer ``targets`` under row-softmax of the logits."""

    name = "cross_entropy"

    def forward(self, logits, targets=None):
        if logits.ndim != 2 or targets is None or targets.shape != (logits.shape[0],):
            raise DimensionError(
                f"cross_entropy: logits {logits.shape} vs targets {None if targets is None else targets.shape}"
            )
        z = logits - logits.max(axis=-1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
        self.logp, self.targets = logp, targets
        rows = np.arange(logits.shape[0])
        return np.array(-logp[rows, targets].mean())

    def backward(self, grad):
        p = np.exp(self.logp)
        n = p.shape[0]
        p[np.arange(n), self.targets] -= 1.0
        return (p * (float(grad) / n),)


class Embedding(Function):
    name = "embedding"

    def forward(self, table, ids=None):
        self.table_shape, self.ids = table.shape, ids
        return table[ids]

    def backward(self, grad):
        out = np.zeros(self.table_shape)
        np.add.at(out, self.ids, grad)
        return (out,)


class Dropout(Function):
    name = "dropout"

    def forward(self, x, mask=None):
        self.mask = mask
        return x * mask

    def backward(self, grad):
        return (grad * self.mask,)


OPS: Dict[str, Type[Function]] = {
    cls.name: cls
    for cls in (
        Add, Sub, Mul, MatMul, Transpose, Reshape, GetItem, Concat, BroadcastTo,
        SumAll, MeanAll, SoftmaxRows, LayerNorm, Gelu, CrossEntropy, Embedding, Dropout,
    )
}


def add(a: Tensor | ArrayLike, b: Tensor | ArrayLike) -> Tensor:
    return Add.apply(a, b)


def sub(a: Tensor | ArrayLike, b: Tensor | ArrayLike) -> Tensor:
    return Sub.apply(a, b)


def mul(a: Tensor | ArrayLike, b: Tensor | ArrayLike) -> Tensor:
    return Mul.apply(a, b)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    return MatMul.apply(a, b)


def transpose(a: Tensor, axes: Optional[Tuple[int, ...]] = None) -> Tensor:
    return Transpose.apply(a, axes=axes)


def reshape(a: Tensor, shape: Tuple[int, ...]) -> Tensor:
    return Reshape.apply(a, shape=shape)


def getitem(a: Tensor, index: Any) -> Tensor:
    return GetItem.apply(a, index=index)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    return Concat.apply(*tensors, axis=axis)


def broadcast_to(a: Tensor, shape: Tuple[int, ...]) -> Tensor:
    return BroadcastTo.apply(a, shape=tuple(shape))


def sum_all(a: Tensor) -> Tensor:
    return SumAll.apply(a)


def mean_all(a: Tensor) -> Tensor:
    return MeanAll.apply(a)


def softmax_rows(a: Tensor, mask: Optional[np.ndarray] = None) -> Tensor:
    return SoftmaxRows.apply(a, mask=mask)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    return LayerNorm.apply(x, gamma, beta, eps=eps)


def gelu(x: Tensor) -> Tensor:
    return Gelu.apply(x)


def cross_entropy(logits: Tensor, targets: np.ndarray) -> Tensor:
    return CrossEntropy.apply(logits, targets=np.asarray(targets, dtype=np.int64))


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    return Embedding.apply(table, ids=np.asarray(ids, dtype=np.int64))


def dropout(x: Tensor, p: float, rng: Optional[np.random.Generator], training: bool) -> Tensor:
    """Inverted dropout; identity when not training or ``p == 0``."""
    if not training or p == 0.0:
        return x
    if rng is None:
        raise ContractError("dropout in training mode needs an rng")
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    return Dropout.apply(x, mask=mask)
