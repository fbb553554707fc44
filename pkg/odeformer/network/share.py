from __future__ import annotations

from typing import List

from ..errors import ConfigError


def share_map(depth: int, k: int) -> List[int]:
    """Parameter-set index for every layer; ``depth // k`` consecutive layers share a set."""
    if depth < 1:
        raise ConfigError(f"depth must be >= 1, got {depth}")
    if not 1 <= k <= depth:
        raise ConfigError(f"independent_layers={k} must lie in [1, depth={depth}]")
    if depth % k:
        raise ConfigError(f"independent_layers={k} does not divide depth={depth}")
    return [m * k // depth for m in range(depth)]
