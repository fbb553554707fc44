"""Define-by-run reverse-mode differentiation over numpy float64 arrays.

Ops are :class:`Function` subclasses. Calling ``SomeOp.apply(*tensors)`` runs the
forward on raw arrays and, if any input participates in gradients and a
:class:`Tape` is active on the current thread, appends one entry to that tape.
``Tape.backward(loss)`` then walks the entries in reverse recording order.
"""
from __future__ import annotations

from contextvars import ContextVar
from dataclasses import dataclass
from typing import Any, ClassVar, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..errors import ContractError

ArrayLike = Union[np.ndarray, float, int, Sequence[Any]]

_ACTIVE_TAPE: ContextVar[Optional["Tape"]] = ContextVar("odeformer_active_tape", default=None)


class Tensor:
    """Dense float64 array with optional gradient participation."""

    __slots__ = ("data", "grad_enabled", "grad", "name", "__weakref__")
    __array_priority__ = 100.0

    def __init__(self, data: ArrayLike, grad_enabled: bool = False, name: Optional[str] = None) -> None:
        self.data = np.array(data, dtype=np.float64)
        self.grad_enabled = grad_enabled
        self.grad: Optional[np.ndarray] = None
        self.name = name

    @classmethod
    def wrap(cls, array: np.ndarray, grad_enabled: bool = False, name: Optional[str] = None) -> "Tensor":
        """Adopt ``array`` without copying it."""
        t = cls.__new__(cls)
        t.data = np.asarray(array, dtype=np.float64)
        t.grad_enabled = grad_enabled
        t.grad = None
        t.name = name
        return t

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.item())

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate_grad(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64).reshape(self.data.shape)
        else:
            self.grad = self.grad + g

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, grad_enabled={self.grad_enabled})"

    # operator sugar; the implementations live in ops.py
    def __add__(self, other: Any) -> "Tensor":
        from .ops import add

        return add(self, other)

    def __radd__(self, other: Any) -> "Tensor":
        from .ops import add

        return add(other, self)

    def __sub__(self, other: Any) -> "Tensor":
        from .ops import sub

        return sub(self, other)

    def __rsub__(self, other: Any) -> "Tensor":
        from .ops import sub

        return sub(other, self)

    def __mul__(self, other: Any) -> "Tensor":
        from .ops import mul

        return mul(self, other)

    def __rmul__(self, other: Any) -> "Tensor":
        from .ops import mul

        return mul(other, self)

    def __neg__(self) -> "Tensor":
        from .ops import mul

        return mul(self, -1.0)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        from .ops import matmul

        return matmul(self, other)

    def __getitem__(self, index: Any) -> "Tensor":
        from .ops import getitem

        return getitem(self, index)

    def reshape(self, *shape: int) -> "Tensor":
        from .ops import reshape

        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, tuple(shape))

    def transpose(self, *axes: int) -> "Tensor":
        from .ops import transpose

        return transpose(self, tuple(axes) if axes else None)

    def sum(self) -> "Tensor":
        from .ops import sum_all

        return sum_all(self)

    def mean(self) -> "Tensor":
        from .ops import mean_all

        return mean_all(self)


def as_tensor(x: Union[Tensor, ArrayLike]) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class Function:
    """One differentiable operation; instances hold what backward needs."""

    name: ClassVar[str] = "function"

    def forward(self, *arrays: np.ndarray, **kwargs: Any) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        raise NotImplementedError

    @classmethod
    def apply(cls, *inputs: Union[Tensor, ArrayLike], **kwargs: Any) -> Tensor:
        tensors = tuple(as_tensor(t) for t in inputs)
        fn = cls()
        out = Tensor.wrap(fn.forward(*(t.data for t in tensors), **kwargs))
        if any(t.grad_enabled for t in tensors):
            tape = _ACTIVE_TAPE.get()
            if tape is not None:
                out.grad_enabled = True
                tape.record(fn, tensors, out)
        return out


@dataclass
class TapeEntry:
    fn: Function
    inputs: Tuple[Tensor, ...]
    output: Tensor


class Tape:
    """Ordered record of operations; use as a context manager to activate it."""

    def __init__(self) -> None:
        self.entries: List[TapeEntry] = []
        self._tokens: List[Any] = []

    def __enter__(self) -> "Tape":
        self._tokens.append(_ACTIVE_TAPE.set(self))
        return self

    def __exit__(self, *exc: Any) -> None:
        _ACTIVE_TAPE.reset(self._tokens.pop())

    def __len__(self) -> int:
        return len(self.entries)

    def record(self, fn: Function, inputs: Tuple[Tensor, ...], output: Tensor) -> None:
        self.entries.append(TapeEntry(fn, inputs, output))

    def backward(self, loss: Tensor) -> None:
        if loss.size != 1 or loss.ndim > 1:
            raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
        if not loss.grad_enabled:
            raise ContractError("loss does not depend on any grad-enabled tensor recorded on this tape")
        grads: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        owners: Dict[int, Tensor] = {id(loss): loss}
        for entry in reversed(self.entries):
            g = grads.pop(id(entry.output), None)
            if g is None:
                continue
            owners.pop(id(entry.output), None)
            # every consumer of this output was recorded later, so g is complete here
            entry.output.accumulate_grad(g)
            for t, gi in zip(entry.inputs, entry.fn.backward(g)):
                if gi is None or not t.grad_enabled:
                    continue
                key = id(t)
                if key in grads:
                    grads[key] = grads[key] + gi
                else:
                    grads[key] = gi
                    owners[key] = t
        for key, g in grads.items():
            owners[key].accumulate_grad(g)


def backward(tape: Tape, loss: Tensor) -> None:
    tape.backward(loss)


def active_tape() -> Optional[Tape]:
    return _ACTIVE_TAPE.get()


def zero_grads(params: Iterable[Tensor]) -> None:
    for p in params:
        p.zero_grad()
