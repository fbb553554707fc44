"""Binary checkpoint: magic, config record, then every named parameter tensor.

Layout (all integers little-endian)::

    MAGIC
    u32 record length, record bytes (JSON: {"config": ..., "meta": ...})
    u32 tensor count
    per tensor: u32 name length, name (utf-8), u32 rank, rank x u64 dims, '<f8' payload
"""
from __future__ import annotations

import struct
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
import orjson
from pydantic import ValidationError

from ..config import NetworkConfig
from ..errors import CheckpointError, ConfigError
from ..utils.logger import get_logger
from .model import Network, build_network

log = get_logger("odeformer.checkpoint")

MAGIC = b"ODEFCKP1"
_U32 = struct.Struct("<I")


def encode_checkpoint(net: Network, meta: Optional[Dict[str, Any]] = None) -> bytes:
    record = orjson.dumps({"config": net.config.model_dump(mode="json"), "meta": meta or {}})
    named = list(net.named_parameters())
    parts = [MAGIC, _U32.pack(len(record)), record, _U32.pack(len(named))]
    for name, t in named:
        raw = name.encode("utf-8")
        parts.append(_U32.pack(len(raw)) + raw + _U32.pack(t.ndim))
        parts.append(struct.pack(f"<{t.ndim}Q", *t.shape))
        parts.append(np.ascontiguousarray(t.data, dtype="<f8").tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, buf: bytes) -> None:
        self.buf, self.pos = buf, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointError(f"checkpoint truncated at byte {self.pos} (wanted {n} more)")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return _U32.unpack(self.take(4))[0]


def decode_checkpoint(
    buf: bytes, expect: Optional[NetworkConfig] = None
) -> Tuple[Network, Dict[str, Any]]:
    r = _Reader(buf)
    if r.take(len(MAGIC)) != MAGIC:
        raise CheckpointError("not an odeformer checkpoint (bad magic)")
    try:
        record = orjson.loads(r.take(r.u32()))
        cfg = NetworkConfig.model_validate(record["config"])
    except (orjson.JSONDecodeError, KeyError, TypeError, ValidationError) as e:
        raise CheckpointError(f"unreadable config record: {e}") from e
    if expect is not None and expect.model_dump() != cfg.model_dump():
        raise CheckpointError("checkpoint config does not match the expected network config")
    try:
        net = build_network(cfg, seed=0)
    except ConfigError as e:
        raise CheckpointError(f"checkpoint config is invalid: {e}") from e
    params = dict(net.named_parameters())
    seen = set()
    for _ in range(r.u32()):
        name = r.take(r.u32()).decode("utf-8")
        rank = r.u32()
        shape = struct.unpack(f"<{rank}Q", r.take(8 * rank))
        count = int(np.prod(shape, dtype=np.int64))
        data = np.frombuffer(r.take(8 * count), dtype="<f8").reshape(shape)
        if name not in params:
            raise CheckpointError(f"unexpected tensor {name!r} in checkpoint")
        if params[name].shape != tuple(shape):
            raise CheckpointError(f"tensor {name!r}: stored shape {tuple(shape)} != expected {params[name].shape}")
        params[name].data[...] = data
        seen.add(name)
    missing = sorted(set(params) - seen)
    if missing:
        raise CheckpointError(f"checkpoint is missing tensors: {', '.join(missing[:5])}")
    if r.pos != len(buf):
        raise CheckpointError(f"{len(buf) - r.pos} trailing bytes after the last tensor")
    return net, record.get("meta", {})


def save_checkpoint(net: Network, path: Union[str, Path], meta: Optional[Dict[str, Any]] = None) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    tmp = p.with_suffix(p.suffix + ".tmp")
    tmp.write_bytes(encode_checkpoint(net, meta))
    tmp.replace(p)
    log.debug("saved checkpoint path=%s", p)
    return p


def load_checkpoint(
    path: Union[str, Path], expect: Optional[NetworkConfig] = None
) -> Tuple[Network, Dict[str, Any]]:
    p = Path(path)
    try:
        buf = p.read_bytes()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint {p}: {e}") from e
    return decode_checkpoint(buf, expect)
