"""Desk-scale datasets: synthetic patterned patches, flat image files, byte-level text."""
from __future__ import annotations

import queue
import struct
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Iterator, Optional, Tuple, TypeVar, Union

import numpy as np

from ..config import NetworkConfig, TrainConfig
from ..errors import DatasetError
from ..utils.logger import get_logger

log = get_logger("odeformer.data")

IMAGE_MAGIC = b"ODEFIMG1"
_IMAGE_HEADER = struct.Struct("<4I")
NOISE_STD = 0.3

Batch = Tuple[np.ndarray, np.ndarray]
T = TypeVar("T")


@dataclass
class ArraySplit:
    inputs: np.ndarray
    targets: np.ndarray

    def __len__(self) -> int:
        return int(self.inputs.shape[0])

    def batches(self, batch_size: int, rng: Optional[np.random.Generator] = None) -> Iterator[Batch]:
        """Mini-batches in order, or in a permutation drawn from ``rng``."""
        order = rng.permutation(len(self)) if rng is not None else np.arange(len(self))
        for start in range(0, len(self), batch_size):
            idx = order[start : start + batch_size]
            yield self.inputs[idx], self.targets[idx]


@dataclass
class Dataset:
    task: str
    train: ArraySplit
    val: ArraySplit


def designated_patches(num_patches: int, num_classes: int) -> np.ndarray:
    if num_patches < num_classes:
        raise DatasetError(f"{num_patches} patches cannot carry {num_classes} classes")
    return np.arange(num_classes) * (num_patches // num_classes)


def make_patterned_patches(
    n: int,
    seed: int,
    image_size: int = 32,
    patch_size: int = 4,
    channels: int = 3,
    num_classes: int = 10,
) -> Batch:
    """Images whose label is the designated patch with the highest mean.

    Pixels are N(0, 0.3) noise; the label's patch gets +1 on every pixel.
    """
    side = image_size // patch_size
    spots = designated_patches(side * side, num_classes)
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, num_classes, size=n)
    images = rng.normal(0.0, NOISE_STD, size=(n, channels, image_size, image_size))
    for i, label in enumerate(labels):
        row, col = divmod(int(spots[label]), side)
        images[i, :, row * patch_size : (row + 1) * patch_size, col * patch_size : (col + 1) * patch_size] += 1.0
    return images, labels.astype(np.int64)


def patch_means(images: np.ndarray, patch_size: int) -> np.ndarray:
    b, c, h, w = images.shape
    x = images.reshape(b, c, h // patch_size, patch_size, w // patch_size, patch_size)
    return x.mean(axis=(1, 3, 5)).reshape(b, -1)


def write_image_file(path: Union[str, Path], images: np.ndarray, labels: np.ndarray) -> Path:
    """Header (magic, count, channels, height, width), uint8 pixels, uint8 labels."""
    images = np.asarray(images)
    labels = np.asarray(labels)
    if images.ndim != 4 or images.dtype != np.uint8:
        raise DatasetError(f"images must be uint8 [N, C, H, W], got {images.dtype} {images.shape}")
    if labels.shape != (images.shape[0],) or labels.min(initial=0) < 0 or labels.max(initial=0) > 255:
        raise DatasetError("labels must be one byte per image")
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_bytes(
        IMAGE_MAGIC
        + _IMAGE_HEADER.pack(*images.shape)
        + images.tobytes()
        + labels.astype(np.uint8).tobytes()
    )
    return p


def read_image_file(path: Union[str, Path]) -> Batch:
    """Images as float64 in [0, 1] and int64 labels."""
    try:
        buf = Path(path).read_bytes()
    except OSError as e:
        raise DatasetError(f"cannot read image file {path}: {e}") from e
    head = len(IMAGE_MAGIC) + _IMAGE_HEADER.size
    if len(buf) < head or buf[: len(IMAGE_MAGIC)] != IMAGE_MAGIC:
        raise DatasetError(f"{path} is not an image file (bad magic)")
    n, c, h, w = _IMAGE_HEADER.unpack(buf[len(IMAGE_MAGIC) : head])
    pixels = n * c * h * w
    if len(buf) != head + pixels + n:
        raise DatasetError(f"{path}: expected {head + pixels + n} bytes, found {len(buf)}")
    images = np.frombuffer(buf, dtype=np.uint8, count=pixels, offset=head).reshape(n, c, h, w)
    labels = np.frombuffer(buf, dtype=np.uint8, count=n, offset=head + pixels)
    return images.astype(np.float64) / 255.0, labels.astype(np.int64)


def read_corpus(path: Union[str, Path]) -> np.ndarray:
    try:
        raw = Path(path).read_bytes()
    except OSError as e:
        raise DatasetError(f"cannot read corpus {path}: {e}") from e
    return np.frombuffer(raw, dtype=np.uint8).astype(np.int64)


def lm_windows(data: np.ndarray, length: int, stride: int) -> ArraySplit:
    """Inputs ``data[s:s+length]`` with targets shifted by one byte."""
    if len(data) < length + 1:
        raise DatasetError(f"corpus of {len(data)} bytes is shorter than one window of {length + 1}")
    starts = np.arange(0, len(data) - length, stride)
    idx = starts[:, None] + np.arange(length)[None, :]
    return ArraySplit(inputs=data[idx], targets=data[idx + 1])


def _split_tail(inputs: np.ndarray, targets: np.ndarray, val_fraction: float) -> Tuple[ArraySplit, ArraySplit]:
    n_val = max(1, int(round(len(inputs) * val_fraction)))
    if n_val >= len(inputs):
        raise DatasetError(f"{len(inputs)} samples leave nothing to train on")
    return (
        ArraySplit(inputs[:-n_val], targets[:-n_val]),
        ArraySplit(inputs[-n_val:], targets[-n_val:]),
    )


def load_dataset(net: NetworkConfig, train: TrainConfig) -> Dataset:
    """Build the train/val splits for ``net.task`` from ``train.dataset_path`` (or synthetic data)."""
    if net.task == "classify":
        if train.dataset_path is None:
            tr = make_patterned_patches(
                train.train_samples, train.seed, net.image_size, net.patch_size, net.channels, net.num_classes
            )
            va = make_patterned_patches(
                train.val_samples, train.seed + 1, net.image_size, net.patch_size, net.channels, net.num_classes
            )
            log.info("dataset=synthetic train=%d val=%d", len(tr[0]), len(va[0]))
            return Dataset("classify", ArraySplit(*tr), ArraySplit(*va))
        images, labels = read_image_file(train.dataset_path)
        want = (net.channels, net.image_size, net.image_size)
        if images.shape[1:] != want:
            raise DatasetError(f"{train.dataset_path}: images are {images.shape[1:]}, network expects {want}")
        if labels.max(initial=0) >= net.num_classes:
            raise DatasetError(f"{train.dataset_path}: label {labels.max()} >= num_classes={net.num_classes}")
        tr_split, va_split = _split_tail(images, labels, train.val_fraction)
        log.info("dataset=%s train=%d val=%d", train.dataset_path, len(tr_split), len(va_split))
        return Dataset("classify", tr_split, va_split)

    if train.dataset_path is None:
        raise DatasetError("the lm task needs a text corpus (dataset_path)")
    data = read_corpus(train.dataset_path)
    length = net.context_length
    n_val = max(length + 1, int(round(len(data) * train.val_fraction)))
    if len(data) - n_val < length + 1:
        # too small to hold out a tail; evaluate on the training text
        train_bytes, val_bytes = data, data
    else:
        train_bytes, val_bytes = data[:-n_val], data[-n_val:]
    stride = train.lm_stride or max(1, length // 4)
    ds = Dataset("lm", lm_windows(train_bytes, length, stride), lm_windows(val_bytes, length, length))
    log.info("dataset=%s bytes=%d train_windows=%d val_windows=%d", train.dataset_path, len(data), len(ds.train), len(ds.val))
    return ds


_DONE = object()


class PrefetchLoader(Iterable[T]):
    """Runs ``source()`` on one background thread, ``depth`` items ahead, in order."""

    def __init__(self, source: Callable[[], Iterable[T]], depth: int = 2) -> None:
        self.source = source
        self.depth = depth

    def __iter__(self) -> Iterator[T]:
        if self.depth <= 0:
            yield from self.source()
            return
        q: "queue.Queue[object]" = queue.Queue(maxsize=self.depth)
        stop = threading.Event()

        def put(item: object) -> bool:
            while not stop.is_set():
                try:
                    q.put(item, timeout=0.1)
                    return True
                except queue.Full:
                    continue
            return False

        def produce() -> None:
            try:
                for item in self.source():
                    if not put(item):
                        return
                put(_DONE)
            except BaseException as e:  # re-raised on the consumer thread
                put(e)

        worker = threading.Thread(target=produce, name="odeformer-prefetch", daemon=True)
        worker.start()
        try:
            while True:
                item = q.get()
                if item is _DONE:
                    return
                if isinstance(item, BaseException):
                    raise item
                yield item  # type: ignore[misc]
        finally:
            stop.set()
            worker.join(timeout=1.0)
