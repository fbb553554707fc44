from __future__ import annotations

from pathlib import Path
from typing import Any, Dict, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator

from .errors import ConfigError
from .utils.io import read_json

BlockVariant = Literal["sequential", "parallel"]
NormVariant = Literal["A", "B", "C", "none"]
Scheme = Literal["euler", "rk4"]
Task = Literal["classify", "lm"]
PresetName = Literal["deit_ti", "nlp_small"]

PRESETS: Dict[str, Dict[str, Any]] = {
    "deit_ti": {
        "task": "classify",
        "depth": 12,
        "dim": 192,
        "heads": 3,
        "mlp_ratio": 4.0,
        "image_size": 224,
        "patch_size": 16,
        "channels": 3,
        "num_classes": 100,
    },
    "nlp_small": {
        "task": "lm",
        "depth": 6,
        "dim": 128,
        "heads": 2,
        "mlp_ratio": 4.0,
        "vocab_size": 256,
        "context_length": 64,
    },
}

# Small translation model dims (encoder/decoder); no encoder-decoder network is built from these.
NMT_SMALL_DIMS: Dict[str, int] = {
    "encoder_embed_dim": 128,
    "encoder_ffn_embed_dim": 512,
    "encoder_attention_heads": 2,
    "decoder_attention_heads": 2,
}


class BlockConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    variant: BlockVariant = "parallel"
    norm_variant: NormVariant = "A"
    dropout_p: float = Field(0.0, ge=0.0, lt=1.0)
    stoch_depth_p: float = Field(0.0, ge=0.0, lt=1.0)
    training: bool = False
    causal: bool = False
    eps: float = Field(1e-5, gt=0.0)


class NetworkConfig(BaseModel):
    preset: Optional[PresetName] = None
    task: Task = "classify"
    depth: int = Field(4, ge=1)
    independent_layers: Optional[int] = Field(None, ge=1)
    dim: int = Field(32, ge=1)
    heads: int = Field(2, ge=1)
    mlp_ratio: float = Field(2.0, gt=0.0)
    variant: BlockVariant = "parallel"
    norm_variant: NormVariant = "A"
    scheme: Scheme = "euler"
    steps_per_layer: int = Field(1, ge=1)
    dropout_p: float = Field(0.0, ge=0.0, lt=1.0)
    stoch_depth_p: float = Field(0.0, ge=0.0, lt=1.0)
    num_classes: int = Field(10, ge=1)
    image_size: int = Field(32, ge=1)
    patch_size: int = Field(4, ge=1)
    channels: int = Field(3, ge=1)
    vocab_size: int = Field(256, ge=1)
    context_length: int = Field(64, ge=1)
    init_std: float = Field(0.02, gt=0.0)

    @model_validator(mode="before")
    @classmethod
    def _fill_from_preset(cls, data: Any) -> Any:
        if not isinstance(data, dict):
            return data
        # unset (None) fields fall back to the preset or the field default
        data = {k: v for k, v in data.items() if v is not None}
        name = data.get("preset")
        if name:
            if name not in PRESETS:
                raise ValueError(f"unknown preset {name!r}")
            data = {**PRESETS[name], **data}
        return data

    @model_validator(mode="after")
    def _default_independent_layers(self) -> "NetworkConfig":
        if self.independent_layers is None:
            self.independent_layers = self.depth
        return self

    @property
    def k(self) -> int:
        return int(self.independent_layers or self.depth)

    @property
    def d_ff(self) -> int:
        return max(1, int(round(self.mlp_ratio * self.dim)))

    @property
    def num_patches(self) -> int:
        return (self.image_size // self.patch_size) ** 2

    @property
    def patch_dim(self) -> int:
        return self.channels * self.patch_size * self.patch_size

    def block_config(self, training: bool = False) -> BlockConfig:
        return BlockConfig(
            variant=self.variant,
            norm_variant=self.norm_variant,
            dropout_p=self.dropout_p,
            stoch_depth_p=self.stoch_depth_p,
            training=training,
            causal=self.task == "lm",
        )


def check_network_config(cfg: NetworkConfig) -> None:
    """Cross-field rules pydantic cannot express per field."""
    if not 1 <= cfg.k <= cfg.depth:
        raise ConfigError(f"independent_layers={cfg.k} must lie in [1, depth={cfg.depth}]")
    if cfg.depth % cfg.k:
        raise ConfigError(f"independent_layers={cfg.k} does not divide depth={cfg.depth}")
    if cfg.dim % cfg.heads:
        raise ConfigError(f"heads={cfg.heads} does not divide dim={cfg.dim}")
    if cfg.task == "classify" and cfg.image_size % cfg.patch_size:
        raise ConfigError(
            f"image_size={cfg.image_size} is not divisible by patch_size={cfg.patch_size}"
        )
    if cfg.variant == "sequential" and (cfg.scheme != "euler" or cfg.steps_per_layer != 1):
        raise ConfigError("the sequential variant is a fixed splitting; use scheme=euler, steps_per_layer=1")


class TrainConfig(BaseModel):
    epochs: int = Field(1, ge=1)
    max_steps: Optional[int] = Field(None, ge=1)
    batch_size: int = Field(32, ge=1)
    lr: float = Field(1e-3, gt=0.0)
    warmup_steps: int = Field(0, ge=0)
    cosine_decay: bool = True
    weight_decay: float = Field(0.0, ge=0.0)
    betas: tuple[float, float] = (0.9, 0.999)
    seed: int = 0
    # None keeps the network config's value
    dropout_p: Optional[float] = Field(None, ge=0.0, lt=1.0)
    stoch_depth_p: Optional[float] = Field(None, ge=0.0, lt=1.0)
    scheme: Optional[Scheme] = None
    task: Optional[Task] = None
    dataset_path: Optional[str] = None
    train_samples: int = Field(512, ge=1)
    val_samples: int = Field(128, ge=1)
    val_fraction: float = Field(0.1, gt=0.0, lt=1.0)
    # LM training windows start every lm_stride bytes (default: context_length // 4)
    lm_stride: Optional[int] = Field(None, ge=1)
    eval_interval: int = Field(50, ge=1)
    eval_batch_size: int = Field(64, ge=1)
    prefetch: int = Field(2, ge=0)
    out_dir: str = "runs/latest"

    def apply_to(self, net: NetworkConfig) -> NetworkConfig:
        update = {
            k: v
            for k, v in {
                "dropout_p": self.dropout_p,
                "stoch_depth_p": self.stoch_depth_p,
                "scheme": self.scheme,
                "task": self.task,
            }.items()
            if v is not None
        }
        return net.model_copy(update=update) if update else net


class RunConfig(BaseModel):
    network: NetworkConfig = Field(default_factory=NetworkConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)


def load_run_config(path: Union[str, Path, None], overrides: Optional[Dict[str, Dict[str, Any]]] = None) -> RunConfig:
    """Read a JSON run config (optional) and apply flag overrides on top of it."""
    data: Dict[str, Any] = read_json(path) if path else {}
    for section, values in (overrides or {}).items():
        given = {k: v for k, v in values.items() if v is not None}
        if given:
            data[section] = {**data.get(section, {}), **given}
    return RunConfig.model_validate(data)
