"""Central finite-difference comparison against tape gradients."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from .autodiff import Tensor, Tape


@dataclass
class InputCheck:
    name: str
    worst_rel_err: float
    worst_abs_err: float
    passed: bool


@dataclass
class GradcheckResult:
    checks: List[InputCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def worst_rel_err(self) -> float:
        return max((c.worst_rel_err for c in self.checks), default=0.0)


def numeric_grad(fn: Callable[[], Tensor], t: Tensor, eps: float = 1e-5) -> np.ndarray:
    flat = t.data.reshape(-1)
    out = np.zeros(flat.size)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = fn().item()
        flat[i] = orig - eps
        fm = fn().item()
        flat[i] = orig
        out[i] = (fp - fm) / (2.0 * eps)
    return out.reshape(t.shape)


def gradcheck(
    fn: Callable[[], Tensor],
    inputs: Sequence[Tensor],
    names: Optional[Sequence[str]] = None,
    eps: float = 1e-5,
    rtol: float = 1e-4,
    atol: float = 1e-6,
) -> GradcheckResult:
    """Compare d fn()/d input for every input; ``fn`` must return a scalar Tensor."""
    for t in inputs:
        t.zero_grad()
    with Tape() as tape:
        loss = fn()
    tape.backward(loss)
    result = GradcheckResult()
    for i, t in enumerate(inputs):
        name = names[i] if names else (t.name or f"input{i}")
        analytic = t.grad if t.grad is not None else np.zeros(t.shape)
        numeric = numeric_grad(fn, t, eps)
        diff = np.abs(analytic - numeric)
        scale = np.maximum(np.abs(analytic), np.abs(numeric))
        ok = (diff <= atol) | (diff <= rtol * scale)
        rel = diff / np.maximum(scale, atol)
        result.checks.append(
            InputCheck(
                name=name,
                worst_rel_err=float(rel.max(initial=0.0)),
                worst_abs_err=float(diff.max(initial=0.0)),
                passed=bool(ok.all()),
            )
        )
    return result
