"""Minimal differentiable runtime for macro-sampled networks."""

from .ops import Op, conv_out_size
from .plan import CompileError, NetworkPlan, compile_plan
from .runtime import (
    NumericsError,
    Params,
    backward,
    count_params,
    forward,
    forward_with_tape,
    init_params,
    input_jacobian,
    is_buffer,
    load_params,
    save_params,
    trainable_names,
    validate_params,
)
from .train import (
    Batch,
    EpochStats,
    TrainConfig,
    TrainingDivergedError,
    cosine_lr,
    default_cutout_size,
    evaluate,
    softmax_cross_entropy,
    train,
)

__all__ = [
    "Op",
    "conv_out_size",
    "CompileError",
    "NetworkPlan",
    "compile_plan",
    "NumericsError",
    "Params",
    "backward",
    "count_params",
    "forward",
    "forward_with_tape",
    "init_params",
    "input_jacobian",
    "is_buffer",
    "load_params",
    "save_params",
    "trainable_names",
    "validate_params",
    "Batch",
    "EpochStats",
    "TrainConfig",
    "TrainingDivergedError",
    "cosine_lr",
    "default_cutout_size",
    "evaluate",
    "softmax_cross_entropy",
    "train",
]
