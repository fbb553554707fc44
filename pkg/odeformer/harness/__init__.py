from .data import (
    ArraySplit,
    Dataset,
    PrefetchLoader,
    load_dataset,
    make_patterned_patches,
    read_corpus,
    read_image_file,
    write_image_file,
)
from .gradcheck_suite import SCOPES, ScopeReport, gradcheck_cmd, run_scope
from .metrics import MetricRecord, MetricsWriter, cross_entropy_sum, perplexity, read_metrics, top1_accuracy
from .optim import AdamState, adam_step, lr_at
from .train import TrainResult, batch_loss, compare_variants, evaluate, evaluate_split, train

__all__ = [
    "ArraySplit", "Dataset", "PrefetchLoader", "load_dataset", "make_patterned_patches", "read_corpus",
    "read_image_file", "write_image_file", "SCOPES", "ScopeReport", "gradcheck_cmd", "run_scope",
    "MetricRecord", "MetricsWriter", "cross_entropy_sum", "perplexity", "read_metrics", "top1_accuracy",
    "AdamState", "adam_step", "lr_at", "TrainResult", "batch_loss", "compare_variants", "evaluate",
    "evaluate_split", "train",
]
