from __future__ import annotations

import math
from typing import Optional

import numpy as np

from ..config import BlockConfig
from ..errors import ConfigError, DimensionError
from ..tensor import Tensor, dropout, softmax_rows
from .params import AttentionParams


def causal_mask(length: int) -> np.ndarray:
    """True where position i may attend to position j (j <= i)."""
    return np.tril(np.ones((length, length), dtype=bool))


def attention(
    x: Tensor,
    p: AttentionParams,
    causal: bool = False,
    cfg: Optional[BlockConfig] = None,
    rng: Optional[np.random.Generator] = None,
) -> Tensor:
    """G(x_i, X) for every position of ``x`` ([L, d] or [B, L, d]); no residual."""
    d, heads = p.dim, p.heads
    if heads < 1 or d % heads:
        raise ConfigError(f"heads={heads} does not divide dim={d}")
    if x.ndim not in (2, 3) or x.shape[-1] != d:
        raise DimensionError(f"attention: input {x.shape} does not end in model dim {d}")
    single = x.ndim == 2
    if single:
        x = x.reshape(1, *x.shape)
    batch, length, _ = x.shape
    dh = d // heads
    training = cfg.training if cfg else False
    rate = cfg.dropout_p if cfg else 0.0

    def split_heads(t: Tensor) -> Tensor:
        return t.reshape(batch, length, heads, dh).transpose(0, 2, 1, 3)

    q = split_heads(x @ p.wq + p.bq)
    k = split_heads(x @ p.wk + p.bk)
    v = split_heads(x @ p.wv + p.bv)
    scores = (q @ k.transpose()) * (1.0 / math.sqrt(dh))
    probs = softmax_rows(scores, causal_mask(length) if causal else None)
    probs = dropout(probs, rate, rng, training)
    merged = (probs @ v).transpose(0, 2, 1, 3).reshape(batch, length, d)
    out = dropout(merged @ p.wo + p.bo, rate, rng, training)
    return out.reshape(length, d) if single else out
