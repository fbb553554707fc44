from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..blocks import init_block_params, norm_count
from ..config import BlockConfig, NormVariant, Scheme
from ..errors import DivergenceError
from ..tensor import Tensor
from .fields import VectorField, vector_field_of_block
from .schemes import integrate

LADDER = (1.0, 0.5, 0.25, 0.125)
# keeps the coarsest Euler and RK4 steps in their asymptotic range on O(1) fields
DEFAULT_HORIZON = 0.25
REFERENCE_REFINEMENT = 16
EXACT_TOL = 1e-13


@dataclass
class OrderMeasurement:
    scheme: str
    step_sizes: List[float]
    errors: List[float]
    order: Optional[float]

    @property
    def exact(self) -> bool:
        return self.order is None

    def describe(self) -> str:
        return "exact" if self.exact else f"{self.order:.3f}"


def _final_state(f: VectorField, x0: Tensor, t0: float, horizon: float, steps: int, scheme: Scheme) -> np.ndarray:
    out = integrate(f, x0, t0, t0 + horizon, steps, scheme).data
    if not np.all(np.isfinite(out)):
        raise DivergenceError(
            "trajectory left the finite range",
            {"scheme": scheme, "steps": steps, "horizon": horizon},
        )
    return out


def measure_order(
    f: VectorField,
    scheme: Scheme,
    x0: Tensor,
    t0: float = 0.0,
    horizon: float = DEFAULT_HORIZON,
    ladder: Sequence[float] = LADDER,
) -> OrderMeasurement:
    """Slope of log(error) against log(h) for h = horizon * ladder.

    Errors are max-norm distances at t0 + horizon from an RK4 reference run at
    the smallest h divided by 16.
    """
    step_counts = [int(round(1.0 / r)) for r in ladder]
    ref = _final_state(f, x0, t0, horizon, max(step_counts) * REFERENCE_REFINEMENT, "rk4")
    hs = [horizon / n for n in step_counts]
    errors = [
        float(np.max(np.abs(_final_state(f, x0, t0, horizon, n, scheme) - ref)))
        for n in step_counts
    ]
    floor = EXACT_TOL * max(1.0, float(np.max(np.abs(ref))))
    if max(errors) <= floor:
        return OrderMeasurement(scheme=scheme, step_sizes=hs, errors=errors, order=None)
    pairs = [(h, e) for h, e in zip(hs, errors) if e > 0.0]
    slope = np.polyfit(np.log([h for h, _ in pairs]), np.log([e for _, e in pairs]), 1)[0]
    return OrderMeasurement(scheme=scheme, step_sizes=hs, errors=errors, order=float(slope))


EXPECTED_ORDER = {"euler": (0.8, 1.2), "rk4": (3.5, 4.5)}


def within_expected_order(m: OrderMeasurement) -> bool:
    lo, hi = EXPECTED_ORDER[m.scheme]
    return m.order is not None and lo <= m.order <= hi


def transformer_test_field(
    seed: int = 0,
    length: int = 3,
    dim: int = 4,
    heads: int = 2,
    d_ff: int = 8,
    std: float = 0.3,
    norm_variant: NormVariant = "A",
) -> Tuple[VectorField, Tensor]:
    """A random frozen single-layer field and a random starting state."""
    rng = np.random.default_rng(seed)
    cfg = BlockConfig(variant="parallel", norm_variant=norm_variant)
    p = init_block_params(dim, heads, d_ff, norm_count(cfg), rng, std=std)
    return vector_field_of_block(p, cfg), Tensor(rng.uniform(-1.0, 1.0, size=(length, dim)))
