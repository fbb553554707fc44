from __future__ import annotations

from typing import Optional

import numpy as np

from ..config import BlockConfig
from ..errors import DimensionError
from ..tensor import Tensor, dropout, gelu
from .params import MlpParams


def mlp(
    x: Tensor,
    p: MlpParams,
    cfg: Optional[BlockConfig] = None,
    rng: Optional[np.random.Generator] = None,
) -> Tensor:
    """F(x) = gelu(x W1 + b1) W2 + b2 applied per position; no residual."""
    if x.shape[-1] != p.w1.shape[0]:
        raise DimensionError(f"mlp: input {x.shape} vs W1 {p.w1.shape}")
    out = gelu(x @ p.w1 + p.b1) @ p.w2 + p.b2
    if cfg is None:
        return out
    return dropout(out, cfg.dropout_p, rng, cfg.training)
