from ..tensor import Tensor
from .attention import attention, causal_mask
from .block import (
    GateDecision,
    apply_block,
    branch_update,
    parallel_block,
    sequential_block,
    stochastic_depth_gate,
    survival_probability,
)
from .mlp import mlp
from .params import (
    AttentionParams,
    BlockParams,
    MlpParams,
    NormParams,
    init_block_params,
    norm_count,
    scale_branch_outputs,
    zero_branch_outputs,
)

# X = [x_1 ... x_L] as an [L, d] (or batched [B, L, d]) tensor
SequenceState = Tensor

__all__ = [
    "SequenceState", "attention", "causal_mask", "GateDecision", "apply_block", "branch_update",
    "parallel_block", "sequential_block", "stochastic_depth_gate", "survival_probability", "mlp",
    "AttentionParams", "BlockParams", "MlpParams", "NormParams", "init_block_params", "norm_count",
    "scale_branch_outputs", "zero_branch_outputs",
]
