from __future__ import annotations

from typing import Callable, Dict, Sequence

from ..config import Scheme
from ..errors import ContractError
from ..tensor import Tensor
from .fields import VectorField

Stepper = Callable[[VectorField, Tensor, float, float, float], Tensor]


def _check_h(h: float) -> None:
    if not h > 0.0:
        raise ContractError(f"step size must be positive, got {h}")


def _finish(f: VectorField, x: Tensor, delta: Tensor, scale: float) -> Tensor:
    if scale != 1.0:
        delta = delta * scale
    out = x + delta
    return f.post(out) if f.post is not None else out


def euler_step(f: VectorField, x: Tensor, t: float, h: float, scale: float = 1.0) -> Tensor:
    """X + h f(t, X)."""
    _check_h(h)
    g = f.freeze(t)
    return _finish(g, x, g(t, x) * h, scale)


def rk4_step(f: VectorField, x: Tensor, t: float, h: float, scale: float = 1.0) -> Tensor:
    """Classical RK4; all four stages use the field frozen at the step's start."""
    _check_h(h)
    g = f.freeze(t)
    half = h / 2.0
    k1 = g(t, x)
    k2 = g(t + half, x + k1 * half)
    k3 = g(t + half, x + k2 * half)
    k4 = g(t + h, x + k3 * h)
    return _finish(g, x, (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0), scale)


def lie_trotter_step(
    fields: Sequence[VectorField],
    x: Tensor,
    t: float,
    h: float,
    substep: Stepper = euler_step,
) -> Tensor:
    """Advance each sub-field in turn by a full step of size ``h``."""
    for f in fields:
        x = substep(f, x, t, h, 1.0)
    return x


STEPPERS: Dict[str, Stepper] = {"euler": euler_step, "rk4": rk4_step}


def integrate(
    f: VectorField,
    x0: Tensor,
    t0: float,
    t1: float,
    steps: int,
    scheme: Scheme = "euler",
    scale: float = 1.0,
) -> Tensor:
    if steps < 1:
        raise ContractError(f"integrate needs steps >= 1, got {steps}")
    if not t1 > t0:
        raise ContractError(f"integrate needs t1 > t0, got [{t0}, {t1}]")
    if scheme not in STEPPERS:
        raise ContractError(f"unknown scheme {scheme!r}")
    step = STEPPERS[scheme]
    h = (t1 - t0) / steps
    x = x0
    for i in range(steps):
        x = step(f, x, t0 + i * h, h, scale)
    return x
