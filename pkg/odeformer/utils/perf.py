import time
from contextlib import contextmanager
from typing import Dict, Iterator

from .logger import get_logger

log = get_logger("odeformer.perf")


@contextmanager
def timed(section: str) -> Iterator[Dict[str, float]]:
    """Time a block; the yielded dict receives ``seconds`` on exit."""
    out: Dict[str, float] = {}
    t0 = time.perf_counter()
    try:
        yield out
    finally:
        out["seconds"] = time.perf_counter() - t0
        log.info("section=%s seconds=%.3f", section, out["seconds"])
