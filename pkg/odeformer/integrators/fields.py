"""Right-hand sides dX/dt = f(t, X) of the layer ODE."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from ..blocks import BlockParams, attention, branch_update, mlp
from ..config import BlockConfig
from ..tensor import Tensor, layer_norm

FieldFn = Callable[[float, Tensor], Tensor]
Projection = Callable[[Tensor], Tensor]


@dataclass(frozen=True)
class VectorField:
    """A map (t, X) -> dX/dt of X's shape.

    ``post`` is applied to the state after every step (post-norm blocks).
    ``segment`` marks a piecewise field: it returns the autonomous field that
    governs the interval containing ``t``.
    """

    fn: FieldFn
    post: Optional[Projection] = None
    segment: Optional[Callable[[float], "VectorField"]] = None

    def __call__(self, t: float, x: Tensor) -> Tensor:
        return self.fn(t, x)

    def freeze(self, t: float) -> "VectorField":
        return self if self.segment is None else self.segment(t)


def _post_norm(p: BlockParams, index: int, cfg: BlockConfig) -> Projection:
    norm = p.norms[index]
    return lambda x: layer_norm(x, norm.gamma, norm.beta, cfg.eps)


def vector_field_of_block(
    p: BlockParams, cfg: BlockConfig, rng: Optional[np.random.Generator] = None
) -> VectorField:
    """f(t, X) = F(X) + G(X, X) with the configured norms; Euler at h=1 is the parallel block."""
    post = _post_norm(p, 0, cfg) if cfg.norm_variant == "C" else None
    return VectorField(fn=lambda t, x: branch_update(x, p, cfg, rng), post=post)


def branch_fields(
    p: BlockParams, cfg: BlockConfig, rng: Optional[np.random.Generator] = None
) -> Tuple[VectorField, VectorField]:
    """Attention and MLP sub-fields whose Lie-Trotter composition is the sequential block."""
    nv = cfg.norm_variant
    if nv in ("A", "B"):
        n0, n1 = p.norms[0], p.norms[1]
        g = VectorField(fn=lambda t, x: attention(layer_norm(x, n0.gamma, n0.beta, cfg.eps), p.attn, cfg.causal, cfg, rng))
        f = VectorField(fn=lambda t, x: mlp(layer_norm(x, n1.gamma, n1.beta, cfg.eps), p.mlp, cfg, rng))
        return g, f
    post_g = _post_norm(p, 0, cfg) if nv == "C" else None
    post_f = _post_norm(p, 1, cfg) if nv == "C" else None
    g = VectorField(fn=lambda t, x: attention(x, p.attn, cfg.causal, cfg, rng), post=post_g)
    f = VectorField(fn=lambda t, x: mlp(x, p.mlp, cfg, rng), post=post_f)
    return g, f


def piecewise_field(segments: Sequence[VectorField]) -> VectorField:
    """Field over [0, len(segments)] that follows ``segments[floor(t)]``."""
    last = len(segments) - 1

    def segment(t: float) -> VectorField:
        # tolerance keeps t0 + i*h from landing just below an integer boundary
        return segments[min(max(int(math.floor(t + 1e-9)), 0), last)]

    return VectorField(fn=lambda t, x: segment(t)(t, x), segment=segment)


def linear_field(lam: float) -> VectorField:
    return VectorField(fn=lambda t, x: x * lam)


def constant_field(c: float | np.ndarray) -> VectorField:
    value = np.asarray(c, dtype=np.float64)
    return VectorField(fn=lambda t, x: Tensor(np.broadcast_to(value, x.shape)))
