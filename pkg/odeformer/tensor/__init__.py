from .autodiff import Function, Tape, Tensor, active_tape, as_tensor, backward, zero_grads
from .ops import (
    OPS,
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

__all__ = [
    "Function", "Tape", "Tensor", "active_tape", "as_tensor", "backward", "zero_grads", "OPS",
    "add", "broadcast_to", "concat", "cross_entropy", "dropout", "embedding", "gelu", "getitem",
    "layer_norm", "matmul", "mean_all", "mul", "reshape", "softmax_rows", "sub", "sum_all",
    "transpose",
]
