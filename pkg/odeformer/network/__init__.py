from .checkpoint import MAGIC, decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint
from .model import (
    Network,
    build_network,
    count_parameters,
    embed_images,
    embed_tokens,
    forward_classify,
    forward_lm,
    network_vector_field,
    param_count,
    patchify,
    run_layers,
)
from .share import share_map

__all__ = [
    "MAGIC", "decode_checkpoint", "encode_checkpoint", "load_checkpoint", "save_checkpoint",
    "Network", "build_network", "count_parameters", "embed_images", "embed_tokens", "forward_classify", "forward_lm",
    "network_vector_field", "param_count", "patchify", "run_layers", "share_map",
]
