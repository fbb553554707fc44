from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Dict, Literal, Optional, Union

import numpy as np

from ..errors import ContractError
from ..utils.logger import get_logger

log = get_logger("odeformer.metrics")

Split = Literal["train", "val"]


@dataclass
class MetricRecord:
    step: int
    split: Split
    loss: float
    top1: Optional[float] = None
    perplexity: Optional[float] = None
    seconds: float = 0.0

    def to_log_line(self) -> str:
        """``key=value`` pairs; floats use repr so a line round-trips exactly."""
        parts = [f"step={self.step}", f"split={self.split}", f"loss={self.loss!r}"]
        if self.top1 is not None:
            parts.append(f"top1={self.top1!r}")
        if self.perplexity is not None:
            parts.append(f"perplexity={self.perplexity!r}")
        parts.append(f"seconds={self.seconds:.3f}")
        return " ".join(parts)

    @classmethod
    def from_log_line(cls, line: str) -> "MetricRecord":
        fields = dict(part.split("=", 1) for part in line.split())
        return cls(
            step=int(fields["step"]),
            split=fields["split"],  # type: ignore[arg-type]
            loss=float(fields["loss"]),
            top1=float(fields["top1"]) if "top1" in fields else None,
            perplexity=float(fields["perplexity"]) if "perplexity" in fields else None,
            seconds=float(fields.get("seconds", 0.0)),
        )

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def deterministic(self) -> Dict[str, Any]:
        """Everything except wall-clock time."""
        out = self.to_dict()
        out.pop("seconds")
        return out


def top1_accuracy(logits: np.ndarray, labels: np.ndarray) -> float:
    if logits.shape[0] == 0:
        raise ContractError("top1_accuracy of an empty batch")
    return float(np.mean(np.argmax(logits, axis=-1) == labels))


def cross_entropy_sum(logits: np.ndarray, targets: np.ndarray) -> float:
    """Summed negative log-likelihood in nats over rows of ``logits`` [N, V]."""
    z = logits - logits.max(axis=-1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    return float(-logp[np.arange(logits.shape[0]), targets].sum())


def perplexity(mean_cross_entropy: float) -> float:
    return math.exp(mean_cross_entropy)


class MetricsWriter:
    """Appends one line per record to ``path`` and echoes it through the logger."""

    def __init__(self, path: Union[str, Path], truncate: bool = True) -> None:
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        if truncate:
            self.path.write_text("", encoding="utf-8")

    def write(self, record: MetricRecord) -> None:
        line = record.to_log_line()
        with self.path.open("a", encoding="utf-8") as f:
            f.write(line + "\n")
            f.flush()
        log.info(line)


def read_metrics(path: Union[str, Path]) -> list[MetricRecord]:
    return [MetricRecord.from_log_line(line) for line in Path(path).read_text(encoding="utf-8").splitlines() if line.strip()]
