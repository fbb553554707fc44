"""Residual compositions of the attention (G) and MLP (F) sublayers.

Norm placement per ``BlockConfig.norm_variant``:

parallel
    A: Y = norm0(X);  X + F(Y) + G(Y)
    B: X + F(norm0(X)) + G(norm1(X))
    C: norm0(X + F(X) + G(X))
    none: X + F(X) + G(X)
sequential
    A, B: pre-LN, X1 = X + G(norm0(X)); X1 + F(norm1(X1))
    C: post-LN, X1 = norm0(X + G(X)); norm1(X1 + F(X1))
    none: X1 = X + G(X); X1 + F(X1)
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..config import BlockConfig
from ..errors import ConfigError, ContractError
from ..tensor import Tensor, layer_norm
from .attention import attention
from .mlp import mlp
from .params import BlockParams, norm_count


@dataclass(frozen=True)
class GateDecision:
    keep: bool
    scale: float
    survival: float


def survival_probability(layer_index: int, depth: int, p: float) -> float:
    if depth <= 1:
        return 1.0
    return 1.0 - p * layer_index / (depth - 1)


def stochastic_depth_gate(
    layer_index: int,
    depth: int,
    p: float,
    rng: Optional[np.random.Generator],
    training: bool = True,
) -> GateDecision:
    """Linear-decay stochastic depth; kept layers are rescaled by 1/survival."""
    if not 0.0 <= p < 1.0:
        raise ConfigError(f"stochastic depth rate must lie in [0, 1), got {p}")
    if not training or p == 0.0:
        return GateDecision(keep=True, scale=1.0, survival=1.0)
    survival = survival_probability(layer_index, depth, p)
    if survival >= 1.0:
        return GateDecision(keep=True, scale=1.0, survival=1.0)
    if rng is None:
        raise ContractError("stochastic depth in training mode needs an rng")
    keep = bool(rng.random() < survival)
    return GateDecision(keep=keep, scale=1.0 / survival if keep else 0.0, survival=survival)


def _norm(x: Tensor, p: BlockParams, i: int, cfg: BlockConfig) -> Tensor:
    n = p.norms[i]
    return layer_norm(x, n.gamma, n.beta, cfg.eps)


def _check_norms(p: BlockParams, cfg: BlockConfig) -> None:
    need = norm_count(cfg)
    if len(p.norms) < need:
        raise ConfigError(
            f"{cfg.variant} block with norm variant {cfg.norm_variant} needs {need} norms, params carry {len(p.norms)}"
        )


def branch_update(
    x: Tensor,
    p: BlockParams,
    cfg: BlockConfig,
    rng: Optional[np.random.Generator] = None,
) -> Tensor:
    """F(.) + G(.) of the parallel block, with the variant's pre-norms applied inside the branches."""
    nv = cfg.norm_variant
    if nv == "A":
        ctx_f = ctx_g = _norm(x, p, 0, cfg)
    elif nv == "B":
        ctx_f, ctx_g = _norm(x, p, 0, cfg), _norm(x, p, 1, cfg)
    else:
        ctx_f = ctx_g = x
    g = attention(ctx_g, p.attn, cfg.causal, cfg, rng)
    f = mlp(ctx_f, p.mlp, cfg, rng)
    return f + g


def parallel_block(
    x: Tensor,
    p: BlockParams,
    cfg: BlockConfig,
    rng: Optional[np.random.Generator] = None,
    scale: float = 1.0,
) -> Tensor:
    if cfg.variant != "parallel":
        raise ContractError(f"parallel_block called with variant={cfg.variant}")
    _check_norms(p, cfg)
    update = branch_update(x, p, cfg, rng)
    if scale != 1.0:
        update = update * scale
    out = x + update
    if cfg.norm_variant == "C":
        out = _norm(out, p, 0, cfg)
    return out


def sequential_block(
    x: Tensor,
    p: BlockParams,
    cfg: BlockConfig,
    rng: Optional[np.random.Generator] = None,
    scale: float = 1.0,
) -> Tensor:
    if cfg.variant != "sequential":
        raise ContractError(f"sequential_block called with variant={cfg.variant}")
    _check_norms(p, cfg)

    def scaled(t: Tensor) -> Tensor:
        return t if scale == 1.0 else t * scale

    nv = cfg.norm_variant
    if nv == "none":
        x1 = x + scaled(attention(x, p.attn, cfg.causal, cfg, rng))
        return x1 + scaled(mlp(x1, p.mlp, cfg, rng))
    if nv == "C":
        x1 = _norm(x + scaled(attention(x, p.attn, cfg.causal, cfg, rng)), p, 0, cfg)
        return _norm(x1 + scaled(mlp(x1, p.mlp, cfg, rng)), p, 1, cfg)
    x1 = x + scaled(attention(_norm(x, p, 0, cfg), p.attn, cfg.causal, cfg, rng))
    return x1 + scaled(mlp(_norm(x1, p, 1, cfg), p.mlp, cfg, rng))


def apply_block(
    x: Tensor,
    p: BlockParams,
    cfg: BlockConfig,
    layer_index: int = 0,
    depth: int = 1,
    rng: Optional[np.random.Generator] = None,
) -> Tensor:
    """One layer with the configured variant, norms, dropout and stochastic depth."""
    gate = stochastic_depth_gate(layer_index, depth, cfg.stoch_depth_p, rng, cfg.training)
    if not gate.keep:
        return x
    compose = parallel_block if cfg.variant == "parallel" else sequential_block
    return compose(x, p, cfg, rng, gate.scale)
