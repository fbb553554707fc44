from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, List, Tuple

import numpy as np

from ..config import BlockConfig, NormVariant
from ..errors import ConfigError
from ..tensor import Tensor
from ..tensor.init import ones, parameter, trunc_normal, zeros


@dataclass
class AttentionParams:
    """Multi-head attention weights.

    Per-head projections are packed column-wise: head ``h`` of ``wq`` is
    ``wq[:, h*dh:(h+1)*dh]`` with ``dh = d // heads``; same for ``wk``/``wv``.
    """

    wq: Tensor
    bq: Tensor
    wk: Tensor
    bk: Tensor
    wv: Tensor
    bv: Tensor
    wo: Tensor
    bo: Tensor
    heads: int

    @property
    def dim(self) -> int:
        return self.wq.shape[0]

    def named_parameters(self) -> Iterator[Tuple[str, Tensor]]:
        for name in ("wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo"):
            yield name, getattr(self, name)


@dataclass
class MlpParams:
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor

    def named_parameters(self) -> Iterator[Tuple[str, Tensor]]:
        for name in ("w1", "b1", "w2", "b2"):
            yield name, getattr(self, name)


@dataclass
class NormParams:
    gamma: Tensor
    beta: Tensor

    def named_parameters(self) -> Iterator[Tuple[str, Tensor]]:
        yield "gamma", self.gamma
        yield "beta", self.beta


@dataclass
class BlockParams:
    """One layer's weights: attention (G), MLP (F) and its layer norms."""

    attn: AttentionParams
    mlp: MlpParams
    norms: List[NormParams] = field(default_factory=list)

    def named_parameters(self) -> Iterator[Tuple[str, Tensor]]:
        for name, t in self.attn.named_parameters():
            yield f"attn.{name}", t
        for name, t in self.mlp.named_parameters():
            yield f"mlp.{name}", t
        for i, norm in enumerate(self.norms):
            for name, t in norm.named_parameters():
                yield f"norm{i}.{name}", t

    def parameters(self) -> List[Tensor]:
        return [t for _, t in self.named_parameters()]


def norm_count(cfg: BlockConfig | None = None, *, variant: str = "parallel", norm_variant: NormVariant = "A") -> int:
    """How many layer norms a block of this shape owns."""
    if cfg is not None:
        variant, norm_variant = cfg.variant, cfg.norm_variant
    if norm_variant == "none":
        return 0
    if variant == "sequential":
        return 2
    return 2 if norm_variant == "B" else 1


def init_block_params(
    dim: int,
    heads: int,
    d_ff: int,
    n_norms: int,
    rng: np.random.Generator,
    std: float = 0.02,
) -> BlockParams:
    if heads < 1 or dim % heads:
        raise ConfigError(f"heads={heads} does not divide dim={dim}")
    if d_ff < 1:
        raise ConfigError(f"d_ff must be >= 1, got {d_ff}")

    def w(rows: int, cols: int) -> Tensor:
        return parameter(trunc_normal(rng, (rows, cols), std))

    attn = AttentionParams(
        wq=w(dim, dim), bq=zeros((dim,)),
        wk=w(dim, dim), bk=zeros((dim,)),
        wv=w(dim, dim), bv=zeros((dim,)),
        wo=w(dim, dim), bo=zeros((dim,)),
        heads=heads,
    )
    mlp = MlpParams(w1=w(dim, d_ff), b1=zeros((d_ff,)), w2=w(d_ff, dim), b2=zeros((dim,)))
    norms = [NormParams(gamma=ones((dim,)), beta=zeros((dim,))) for _ in range(n_norms)]
    return BlockParams(attn=attn, mlp=mlp, norms=norms)


def zero_branch_outputs(p: BlockParams) -> None:
    """Zero the attention and MLP output projections (and their biases) in place."""
    for t in (p.attn.wo, p.attn.bo, p.mlp.w2, p.mlp.b2):
        t.data[...] = 0.0


def scale_branch_outputs(p: BlockParams, eps: float) -> None:
    """Multiply the attention and MLP output projections (and biases) by ``eps`` in place."""
    for t in (p.attn.wo, p.attn.bo, p.mlp.w2, p.mlp.b2):
        t.data *= eps
