from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..config import NetworkConfig, TrainConfig, check_network_config
from ..errors import CheckpointError, ConfigError, DivergenceError
from ..network import Network, build_network, forward_classify, forward_lm, load_checkpoint, save_checkpoint
from ..tensor import Tape, Tensor, cross_entropy, zero_grads
from ..utils.io import ensure_dir, write_json
from ..utils.logger import get_logger
from ..utils.perf import timed
from .data import ArraySplit, Batch, Dataset, PrefetchLoader, load_dataset
from .metrics import MetricRecord, MetricsWriter, Split, cross_entropy_sum, perplexity, top1_accuracy
from .optim import AdamState, adam_step, lr_at

log = get_logger("odeformer.train")


@dataclass
class TrainResult:
    network: Network
    records: List[MetricRecord] = field(default_factory=list)
    best_path: Optional[Path] = None
    last_path: Optional[Path] = None

    @property
    def final_val(self) -> MetricRecord:
        return [r for r in self.records if r.split == "val"][-1]

    @property
    def final_train(self) -> MetricRecord:
        return [r for r in self.records if r.split == "train"][-1]


def _logits(
    net: Network, inputs: np.ndarray, rng: Optional[np.random.Generator], training: bool
) -> Tensor:
    if net.config.task == "classify":
        return forward_classify(net, inputs, rng, training)
    return forward_lm(net, inputs, rng, training)


def batch_loss(
    net: Network,
    inputs: np.ndarray,
    targets: np.ndarray,
    rng: Optional[np.random.Generator] = None,
    training: bool = False,
) -> Tensor:
    """Mean cross-entropy of one batch (over tokens for the LM)."""
    logits = _logits(net, inputs, rng, training)
    if net.config.task == "lm":
        logits = logits.reshape(-1, logits.shape[-1])
        targets = targets.reshape(-1)
    return cross_entropy(logits, targets)


def evaluate_split(
    net: Network, split: ArraySplit, batch_size: int, step: int = 0, name: Split = "val"
) -> MetricRecord:
    """Exact pass over ``split`` in eval mode."""
    total, correct, count = 0.0, 0, 0
    for inputs, targets in split.batches(batch_size):
        logits = _logits(net, inputs, None, False).data
        if net.config.task == "classify":
            correct += int(round(top1_accuracy(logits, targets) * len(targets)))
        else:
            logits = logits.reshape(-1, logits.shape[-1])
            targets = targets.reshape(-1)
        total += cross_entropy_sum(logits, targets)
        count += int(targets.shape[0])
    mean = total / count
    if net.config.task == "classify":
        return MetricRecord(step=step, split=name, loss=mean, top1=correct / count)
    return MetricRecord(step=step, split=name, loss=mean, perplexity=perplexity(mean))


def _improves(record: MetricRecord, best: Optional[MetricRecord]) -> bool:
    if best is None:
        return True
    if record.top1 is not None and best.top1 is not None and record.top1 != best.top1:
        return record.top1 > best.top1
    return record.loss < best.loss


def _batch_stream(split: ArraySplit, batch_size: int, total: int, seed: int) -> Iterator[Batch]:
    rng = np.random.default_rng(seed)
    batches = itertools.chain.from_iterable(split.batches(batch_size, rng) for _ in itertools.count())
    return itertools.islice(batches, total)


def total_steps(train_cfg: TrainConfig, n_train: int) -> int:
    if train_cfg.max_steps is not None:
        return train_cfg.max_steps
    return train_cfg.epochs * math.ceil(n_train / train_cfg.batch_size)


def train(
    net_cfg: NetworkConfig,
    train_cfg: TrainConfig,
    dataset: Optional[Dataset] = None,
) -> TrainResult:
    """Fit a fresh network; writes metrics.log, best.ckpt and last.ckpt to ``train_cfg.out_dir``."""
    net_cfg = train_cfg.apply_to(net_cfg)
    check_network_config(net_cfg)
    dataset = dataset if dataset is not None else load_dataset(net_cfg, train_cfg)
    if dataset.task != net_cfg.task:
        raise ConfigError(f"dataset task {dataset.task!r} does not match network task {net_cfg.task!r}")
    out = ensure_dir(train_cfg.out_dir)
    writer = MetricsWriter(out / "metrics.log")
    # replayable with `odeformer train --config`
    write_json(out / "run.json", {"network": net_cfg.model_dump(mode="json"), "train": train_cfg.model_dump(mode="json")})
    net = build_network(net_cfg, seed=train_cfg.seed)
    params = net.parameters()
    names = [name for name, _ in net.named_parameters()]
    for name, p in zip(names, params):
        p.name = name
    state = AdamState.for_params(params)
    drop_rng = np.random.default_rng([train_cfg.seed, 1])
    total = total_steps(train_cfg, len(dataset.train))
    result = TrainResult(network=net)
    best: Optional[MetricRecord] = None
    meta_base = {"train": train_cfg.model_dump(mode="json"), "task": net_cfg.task}
    loader = PrefetchLoader(
        lambda: _batch_stream(dataset.train, train_cfg.batch_size, total, train_cfg.seed + 2),
        depth=train_cfg.prefetch,
    )
    log.info(
        "train task=%s variant=%s norm=%s scheme=%s depth=%d k=%d steps=%d",
        net_cfg.task, net_cfg.variant, net_cfg.norm_variant, net_cfg.scheme, net_cfg.depth, net_cfg.k, total,
    )
    t0 = time.perf_counter()
    step = 0
    with timed("train"):
        for inputs, targets in loader:
            zero_grads(params)
            with Tape() as tape:
                loss = batch_loss(net, inputs, targets, drop_rng, training=True)
            if not math.isfinite(loss.item()):
                raise DivergenceError(
                    f"loss became non-finite at step {step + 1}; last good checkpoint: {result.best_path}",
                    {"step": step + 1, "checkpoint": str(result.best_path) if result.best_path else None},
                )
            tape.backward(loss)
            lr = lr_at(step, train_cfg.lr, train_cfg.warmup_steps, total, train_cfg.cosine_decay)
            try:
                adam_step(params, [p.grad for p in params], state, lr, train_cfg.betas, weight_decay=train_cfg.weight_decay)
            except DivergenceError as e:
                e.diagnostics["checkpoint"] = str(result.best_path) if result.best_path else None
                raise
            step += 1
            if step % train_cfg.eval_interval and step != total:
                continue
            seconds = time.perf_counter() - t0
            for split_name, split in (("train", dataset.train), ("val", dataset.val)):
                record = evaluate_split(net, split, train_cfg.eval_batch_size, step, split_name)  # type: ignore[arg-type]
                record.seconds = seconds
                writer.write(record)
                result.records.append(record)
            val = result.records[-1]
            if _improves(val, best):
                best = val
                result.best_path = save_checkpoint(net, out / "best.ckpt", {**meta_base, "step": step, "val": val.deterministic()})
    result.last_path = save_checkpoint(
        net, out / "last.ckpt", {**meta_base, "step": step, "val": result.final_val.deterministic()}
    )
    return result


def evaluate(
    checkpoint: Union[str, Path],
    dataset: Optional[Dataset] = None,
    task: Optional[str] = None,
    dataset_path: Optional[str] = None,
    batch_size: Optional[int] = None,
) -> MetricRecord:
    """Validation metrics of a saved network, on the data it was trained with unless told otherwise."""
    net, meta = load_checkpoint(checkpoint)
    for claimed in (meta.get("task"), task):
        if claimed is not None and claimed != net.config.task:
            raise CheckpointError(f"task {claimed!r} does not match checkpoint task {net.config.task!r}")
    train_cfg = TrainConfig.model_validate(meta.get("train", {}))
    if dataset_path is not None:
        train_cfg = train_cfg.model_copy(update={"dataset_path": dataset_path})
    if dataset is None:
        dataset = load_dataset(net.config, train_cfg)
    if dataset.task != net.config.task:
        raise CheckpointError(f"dataset task {dataset.task!r} does not match checkpoint task {net.config.task!r}")
    return evaluate_split(net, dataset.val, batch_size or train_cfg.eval_batch_size, int(meta.get("step", 0)))


@dataclass
class ComparisonRow:
    seed: int
    parallel_top1: float
    sequential_top1: float

    @property
    def parallel_wins(self) -> bool:
        return self.parallel_top1 >= self.sequential_top1


def compare_variants(
    seeds: Sequence[int] = (0, 1, 2, 3, 4),
    steps: int = 100,
    base: Optional[NetworkConfig] = None,
    out_dir: Union[str, Path] = "runs/compare",
) -> Tuple[List[ComparisonRow], int]:
    """Parallel (norm A) against the sequential baseline on the synthetic task, matched per seed."""
    base = base or NetworkConfig()
    if base.task != "classify":
        raise ConfigError("variant comparison runs on the classification task")
    rows: List[ComparisonRow] = []
    for seed in seeds:
        train_cfg = TrainConfig(seed=seed, max_steps=steps, eval_interval=steps, out_dir=str(Path(out_dir) / f"seed{seed}"))
        dataset = load_dataset(base, train_cfg)
        top1 = {}
        for variant in ("parallel", "sequential"):
            cfg = base.model_copy(update={"variant": variant, "norm_variant": "A", "scheme": "euler", "steps_per_layer": 1})
            run_cfg = train_cfg.model_copy(update={"out_dir": str(Path(train_cfg.out_dir) / variant)})
            top1[variant] = train(cfg, run_cfg, dataset).final_val.top1 or 0.0
        rows.append(ComparisonRow(seed, top1["parallel"], top1["sequential"]))
        log.info("compare seed=%d parallel_top1=%.4f sequential_top1=%.4f", seed, top1["parallel"], top1["sequential"])
    return rows, sum(r.parallel_wins for r in rows)
