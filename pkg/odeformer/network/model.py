"""D-layer networks over k independent parameter sets.

Layer ``m`` uses ``layers[share[m]]``; embeddings, positional embeddings, the
final norm and the head are outside the layers and never shared.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Tuple, Union

import numpy as np

from ..blocks import BlockParams, NormParams, apply_block, init_block_params, norm_count, stochastic_depth_gate
from ..config import NetworkConfig, check_network_config
from ..errors import InputError
from ..integrators import VectorField, integrate, piecewise_field, vector_field_of_block
from ..tensor import Tensor, broadcast_to, concat, embedding, layer_norm
from ..tensor.init import ones, parameter, trunc_normal, zeros
from ..utils.logger import get_logger
from .share import share_map

log = get_logger("odeformer.network")


@dataclass
class Network:
    config: NetworkConfig
    layers: List[BlockParams]
    share: List[int]
    embed: Dict[str, Tensor]
    final_norm: NormParams
    head_w: Tensor
    head_b: Tensor

    def layer_params(self, m: int) -> BlockParams:
        return self.layers[self.share[m]]

    def named_parameters(self) -> Iterator[Tuple[str, Tensor]]:
        for name, t in self.embed.items():
            yield f"embed.{name}", t
        for i, layer in enumerate(self.layers):
            for name, t in layer.named_parameters():
                yield f"layers.{i}.{name}", t
        for name, t in self.final_norm.named_parameters():
            yield f"final_norm.{name}", t
        yield "head.w", self.head_w
        yield "head.b", self.head_b

    def parameters(self) -> List[Tensor]:
        return [t for _, t in self.named_parameters()]


def build_network(
    cfg: NetworkConfig,
    seed: Optional[int] = 0,
    rng: Optional[np.random.Generator] = None,
) -> Network:
    check_network_config(cfg)
    rng = rng if rng is not None else np.random.default_rng(seed)
    d, std = cfg.dim, cfg.init_std
    n_norms = norm_count(variant=cfg.variant, norm_variant=cfg.norm_variant)
    layers = [init_block_params(d, cfg.heads, cfg.d_ff, n_norms, rng, std) for _ in range(cfg.k)]

    def w(*shape: int) -> Tensor:
        return parameter(trunc_normal(rng, shape, std))

    if cfg.task == "classify":
        embed = {
            "patch_w": w(cfg.patch_dim, d),
            "patch_b": zeros((d,)),
            "cls_token": w(1, d),
            "pos_embed": w(cfg.num_patches + 1, d),
        }
        n_out = cfg.num_classes
    else:
        embed = {"token_embed": w(cfg.vocab_size, d), "pos_embed": w(cfg.context_length, d)}
        n_out = cfg.vocab_size
    net = Network(
        config=cfg,
        layers=layers,
        share=share_map(cfg.depth, cfg.k),
        embed=embed,
        final_norm=NormParams(gamma=ones((d,)), beta=zeros((d,))),
        head_w=w(d, n_out),
        head_b=zeros((n_out,)),
    )
    log.debug("task=%s depth=%d k=%d dim=%d params=%d", cfg.task, cfg.depth, cfg.k, d, param_count(net))
    return net


def param_count(net: Network) -> int:
    """Trainable scalars; a shared parameter set is counted once."""
    return sum(t.size for t in net.parameters())


def patchify(images: np.ndarray, patch: int) -> np.ndarray:
    """[B, C, H, W] -> [B, N, C*patch*patch], patches in row-major scan order."""
    b, c, h, w = images.shape
    x = images.reshape(b, c, h // patch, patch, w // patch, patch)
    return x.transpose(0, 2, 4, 1, 3, 5).reshape(b, (h // patch) * (w // patch), c * patch * patch)


def _as_array(x: Union[Tensor, np.ndarray]) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x)


def embed_images(net: Network, images: Union[Tensor, np.ndarray]) -> Tensor:
    cfg = net.config
    arr = np.asarray(_as_array(images), dtype=np.float64)
    want = (cfg.channels, cfg.image_size, cfg.image_size)
    if arr.ndim != 4 or arr.shape[1:] != want:
        raise InputError(f"expected images of shape [B, {want[0]}, {want[1]}, {want[2]}], got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InputError("images contain non-finite values")
    e = net.embed
    tokens = Tensor.wrap(patchify(arr, cfg.patch_size)) @ e["patch_w"] + e["patch_b"]
    cls = broadcast_to(e["cls_token"].reshape(1, 1, cfg.dim), (arr.shape[0], 1, cfg.dim))
    return concat([cls, tokens], axis=1) + e["pos_embed"]


def embed_tokens(net: Network, tokens: Union[Tensor, np.ndarray]) -> Tensor:
    cfg = net.config
    raw = _as_array(tokens)
    if raw.ndim == 1:
        raw = raw[None, :]
    if raw.ndim != 2 or raw.shape[1] < 1:
        raise InputError(f"expected token ids of shape [B, L], got {raw.shape}")
    ids = raw.astype(np.int64)
    if not np.array_equal(ids, raw):
        raise InputError("token ids must be integers")
    if raw.shape[1] > cfg.context_length:
        raise InputError(f"sequence length {raw.shape[1]} exceeds context_length={cfg.context_length}")
    if ids.min() < 0 or ids.max() >= cfg.vocab_size:
        raise InputError(f"token ids must lie in [0, {cfg.vocab_size}), got [{ids.min()}, {ids.max()}]")
    e = net.embed
    return embedding(e["token_embed"], ids) + e["pos_embed"][: ids.shape[1]]


def run_layers(
    net: Network,
    x: Tensor,
    rng: Optional[np.random.Generator] = None,
    training: bool = False,
) -> Tensor:
    """Advance the state through all D layers with the configured variant and scheme."""
    cfg = net.config
    bcfg = cfg.block_config(training)
    depth = cfg.depth
    single_euler = cfg.scheme == "euler" and cfg.steps_per_layer == 1
    for m in range(depth):
        p = net.layer_params(m)
        if cfg.variant == "sequential" or single_euler:
            x = apply_block(x, p, bcfg, m, depth, rng)
            continue
        gate = stochastic_depth_gate(m, depth, bcfg.stoch_depth_p, rng, bcfg.training)
        if not gate.keep:
            continue
        f = vector_field_of_block(p, bcfg, rng)
        x = integrate(f, x, float(m), float(m + 1), cfg.steps_per_layer, cfg.scheme, gate.scale)
    return x


def network_vector_field(
    net: Network, rng: Optional[np.random.Generator] = None, training: bool = False
) -> VectorField:
    """The whole layer stack as one piecewise-constant field over [0, D]."""
    bcfg = net.config.block_config(training)
    return piecewise_field(
        [vector_field_of_block(net.layer_params(m), bcfg, rng) for m in range(net.config.depth)]
    )


def _final_norm(net: Network, x: Tensor) -> Tensor:
    n = net.final_norm
    return layer_norm(x, n.gamma, n.beta)


def forward_classify(
    net: Network,
    images: Union[Tensor, np.ndarray],
    rng: Optional[np.random.Generator] = None,
    training: bool = False,
) -> Tensor:
    """Logits [B, classes] read from the class token."""
    if net.config.task != "classify":
        raise InputError(f"forward_classify on a {net.config.task} network")
    x = run_layers(net, embed_images(net, images), rng, training)
    x = _final_norm(net, x)
    return x[:, 0, :] @ net.head_w + net.head_b


def forward_lm(
    net: Network,
    tokens: Union[Tensor, np.ndarray],
    rng: Optional[np.random.Generator] = None,
    training: bool = False,
) -> Tensor:
    """Next-token logits [B, L, V]; position t sees tokens <= t only."""
    if net.config.task != "lm":
        raise InputError(f"forward_lm on a {net.config.task} network")
    x = run_layers(net, embed_tokens(net, tokens), rng, training)
    return _final_norm(net, x) @ net.head_w + net.head_b


def count_parameters(cfg: NetworkConfig) -> int:
    """Closed form of ``param_count(build_network(cfg))``: shared extras + k * per-layer."""
    check_network_config(cfg)
    d, d_ff = cfg.dim, cfg.d_ff
    n_norms = norm_count(variant=cfg.variant, norm_variant=cfg.norm_variant)
    per_layer = 4 * (d * d + d) + (d * d_ff + d_ff) + (d_ff * d + d) + 2 * d * n_norms
    if cfg.task == "classify":
        extras = cfg.patch_dim * d + d + d + (cfg.num_patches + 1) * d + cfg.num_classes * (d + 1)
    else:
        extras = cfg.vocab_size * d + cfg.context_length * d + cfg.vocab_size * (d + 1)
    return extras + 2 * d + cfg.k * per_layer
