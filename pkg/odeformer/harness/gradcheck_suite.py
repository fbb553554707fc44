"""Finite-difference suites run by ``odeformer gradcheck``."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np

from ..blocks import apply_block, init_block_params, norm_count
from ..blocks.attention import causal_mask
from ..config import BlockConfig, NetworkConfig
from ..errors import ConfigError
from ..integrators import integrate, vector_field_of_block
from ..network import build_network
from ..tensor import (
    Tensor,
    add,
    broadcast_to,
    concat,
    cross_entropy,
    dropout,
    embedding,
    gelu,
    getitem,
    layer_norm,
    matmul,
    mean_all,
    mul,
    reshape,
    softmax_rows,
    sub,
    sum_all,
    transpose,
)
from ..tensor.gradcheck import GradcheckResult, gradcheck
from ..utils.logger import get_logger
from ..utils.perf import timed
from .train import batch_loss

log = get_logger("odeformer.gradcheck")

SCOPES = ("ops", "block", "network", "rk4")

Case = Tuple[Callable[[], Tensor], List[Tensor], List[str]]
CaseBuilder = Callable[[np.random.Generator], Case]


@dataclass
class CaseResult:
    scope: str
    case: str
    seed: int
    result: GradcheckResult

    @property
    def passed(self) -> bool:
        return self.result.passed

    @property
    def worst_rel_err(self) -> float:
        return self.result.worst_rel_err


@dataclass
class ScopeReport:
    scope: str
    cases: List[CaseResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.cases)

    @property
    def failures(self) -> List[str]:
        return sorted({c.case for c in self.cases if not c.passed})

    def worst_by_group(self) -> Dict[str, float]:
        """Worst relative error per (case, parameter) over all seeds."""
        out: Dict[str, float] = {}
        for c in self.cases:
            for check in c.result.checks:
                key = f"{c.case}:{check.name}"
                out[key] = max(out.get(key, 0.0), check.worst_rel_err)
        return out


def _u(rng: np.random.Generator, *shape: int) -> Tensor:
    return Tensor(rng.uniform(-1.0, 1.0, size=shape), grad_enabled=True)


def _weighted(out: Tensor, w: np.ndarray) -> Tensor:
    return sum_all(mul(out, Tensor(w)))


def _unary(op: Callable[[Tensor], Tensor], *shape: int) -> CaseBuilder:
    def build(rng: np.random.Generator) -> Case:
        a = _u(rng, *shape)
        w = rng.uniform(-1.0, 1.0, size=op(a).shape)
        return (lambda: _weighted(op(a), w)), [a], ["a"]

    return build


def _binary(op: Callable[[Tensor, Tensor], Tensor], sa: Tuple[int, ...], sb: Tuple[int, ...]) -> CaseBuilder:
    def build(rng: np.random.Generator) -> Case:
        a, b = _u(rng, *sa), _u(rng, *sb)
        w = rng.uniform(-1.0, 1.0, size=op(a, b).shape)
        return (lambda: _weighted(op(a, b), w)), [a, b], ["a", "b"]

    return build


def _layer_norm_case(rng: np.random.Generator) -> Case:
    x, gamma, beta = _u(rng, 3, 5), _u(rng, 5), _u(rng, 5)
    w = rng.uniform(-1.0, 1.0, size=(3, 5))
    return (lambda: _weighted(layer_norm(x, gamma, beta), w)), [x, gamma, beta], ["x", "gamma", "beta"]


def _cross_entropy_case(rng: np.random.Generator) -> Case:
    logits = _u(rng, 4, 5)
    targets = rng.integers(0, 5, size=4)
    return (lambda: cross_entropy(logits, targets)), [logits], ["logits"]


def _embedding_case(rng: np.random.Generator) -> Case:
    table = _u(rng, 5, 3)
    ids = np.array([[0, 2, 2], [4, 1, 0]])
    w = rng.uniform(-1.0, 1.0, size=(2, 3, 3))
    return (lambda: _weighted(embedding(table, ids), w)), [table], ["table"]


def _dropout_case(rng: np.random.Generator) -> Case:
    x = _u(rng, 4, 5)
    w = rng.uniform(-1.0, 1.0, size=(4, 5))
    seed = int(rng.integers(0, 2**31))
    return (lambda: _weighted(dropout(x, 0.3, np.random.default_rng(seed), True), w)), [x], ["x"]


OP_CASES: Dict[str, CaseBuilder] = {
    "add": _binary(add, (3, 4), (4,)),
    "sub": _binary(sub, (3, 4), (3, 1)),
    "mul": _binary(mul, (2, 3), (2, 3)),
    "matmul": _binary(matmul, (2, 3, 4), (4, 2)),
    "transpose": _unary(lambda a: transpose(a, (1, 0, 2)), 2, 3, 4),
    "reshape": _unary(lambda a: reshape(a, (3, 4)), 2, 6),
    "getitem": _unary(lambda a: getitem(a, (slice(1, 3), slice(None, None, 2))), 4, 5),
    "getitem[fancy]": _unary(lambda a: getitem(a, np.array([0, 2, 0])), 4, 3),
    "concat": _binary(lambda a, b: concat([a, b], axis=0), (2, 3), (1, 3)),
    "broadcast_to": _unary(lambda a: broadcast_to(a, (4, 3)), 1, 3),
    "sum": _unary(sum_all, 3, 4),
    "mean": _unary(mean_all, 3, 4),
    "softmax_rows": _unary(softmax_rows, 3, 4),
    "softmax_rows[causal]": _unary(lambda a: softmax_rows(a, causal_mask(4)), 2, 4, 4),
    "layer_norm": _layer_norm_case,
    "gelu": _unary(gelu, 3, 4),
    "cross_entropy": _cross_entropy_case,
    "embedding": _embedding_case,
    "dropout": _dropout_case,
}


def _block_case(variant: str, norm_variant: str) -> CaseBuilder:
    def build(rng: np.random.Generator) -> Case:
        cfg = BlockConfig(variant=variant, norm_variant=norm_variant)  # type: ignore[arg-type]
        p = init_block_params(4, 2, 8, norm_count(cfg), rng, std=0.5)
        x = _u(rng, 3, 4)
        w = rng.uniform(-1.0, 1.0, size=(3, 4))
        named = list(p.named_parameters())
        return (
            (lambda: _weighted(apply_block(x, p, cfg), w)),
            [x] + [t for _, t in named],
            ["X"] + [n for n, _ in named],
        )

    return build


BLOCK_CASES: Dict[str, CaseBuilder] = {
    f"{variant}/{nv}": _block_case(variant, nv)
    for variant in ("parallel", "sequential")
    for nv in ("A", "B", "C", "none")
}


def _network_case(task: str) -> CaseBuilder:
    def build(rng: np.random.Generator) -> Case:
        if task == "classify":
            cfg = NetworkConfig(
                task="classify", depth=2, independent_layers=1, dim=4, heads=2, mlp_ratio=2.0,
                image_size=4, patch_size=2, channels=1, num_classes=3, init_std=0.5,
            )
            inputs: np.ndarray = rng.uniform(-1.0, 1.0, size=(2, 1, 4, 4))
            targets = rng.integers(0, 3, size=2)
        else:
            cfg = NetworkConfig(
                task="lm", depth=2, independent_layers=2, dim=4, heads=2, mlp_ratio=2.0,
                vocab_size=7, context_length=4, init_std=0.5,
            )
            inputs = rng.integers(0, 7, size=(2, 3))
            targets = rng.integers(0, 7, size=(2, 3))
        net = build_network(cfg, rng=rng)
        named = list(net.named_parameters())
        return (lambda: batch_loss(net, inputs, targets)), [t for _, t in named], [n for n, _ in named]

    return build


NETWORK_CASES: Dict[str, CaseBuilder] = {"classify": _network_case("classify"), "lm": _network_case("lm")}


def _rk4_case(norm_variant: str) -> CaseBuilder:
    def build(rng: np.random.Generator) -> Case:
        cfg = BlockConfig(variant="parallel", norm_variant=norm_variant)  # type: ignore[arg-type]
        p = init_block_params(4, 2, 8, norm_count(cfg), rng, std=0.5)
        x = _u(rng, 3, 4)
        w = rng.uniform(-1.0, 1.0, size=(3, 4))
        f = vector_field_of_block(p, cfg)
        named = list(p.named_parameters())
        return (
            (lambda: _weighted(integrate(f, x, 0.0, 1.0, 2, "rk4"), w)),
            [x] + [t for _, t in named],
            ["X"] + [n for n, _ in named],
        )

    return build


RK4_CASES: Dict[str, CaseBuilder] = {f"rk4x2/{nv}": _rk4_case(nv) for nv in ("A", "C")}

SCOPE_CASES: Dict[str, Dict[str, CaseBuilder]] = {
    "ops": OP_CASES,
    "block": BLOCK_CASES,
    "network": NETWORK_CASES,
    "rk4": RK4_CASES,
}


def run_scope(scope: str, seeds: int = 10, rtol: float = 1e-4) -> ScopeReport:
    if scope not in SCOPE_CASES:
        raise ConfigError(f"unknown gradcheck scope {scope!r}; choose from {', '.join(SCOPES)}")
    report = ScopeReport(scope=scope)
    with timed(f"gradcheck.{scope}"):
        for case, build in SCOPE_CASES[scope].items():
            for seed in range(seeds):
                fn, inputs, names = build(np.random.default_rng([seed, len(case)]))
                result = gradcheck(fn, inputs, names=names, rtol=rtol)
                report.cases.append(CaseResult(scope, case, seed, result))
                if not result.passed:
                    log.warning("gradcheck failed scope=%s case=%s seed=%d worst_rel_err=%.3e", scope, case, seed, result.worst_rel_err)
    return report


def gradcheck_cmd(scopes: Sequence[str] = SCOPES, seeds: int = 10) -> List[ScopeReport]:
    """Run the requested suites; the overall verdict is ``all(r.passed for r in reports)``."""
    return [run_scope(scope, seeds) for scope in scopes]
