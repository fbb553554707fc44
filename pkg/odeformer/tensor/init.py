from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .autodiff import Tensor


def trunc_normal(rng: np.random.Generator, shape: Sequence[int], std: float = 0.02, bound: float = 2.0) -> np.ndarray:
    """Normal(0, std) samples redrawn until they fall within ``bound`` standard deviations."""
    out = rng.standard_normal(tuple(shape))
    bad = np.abs(out) > bound
    while bad.any():
        out[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(out) > bound
    return out * std


def parameter(data: np.ndarray, name: Optional[str] = None) -> Tensor:
    return Tensor(data, grad_enabled=True, name=name)


def zeros(shape: Sequence[int], name: Optional[str] = None) -> Tensor:
    return parameter(np.zeros(tuple(shape)), name)


def ones(shape: Sequence[int], name: Optional[str] = None) -> Tensor:
    return parameter(np.ones(tuple(shape)), name)
