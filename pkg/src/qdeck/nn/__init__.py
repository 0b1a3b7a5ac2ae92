"""Neural building blocks: autodiff tensor, layers, optimizer, checkpoints."""

from .tensor import (
    Tensor,
    parameter,
    no_grad,
    zero_grads,
    finite_diff_check,
    scatter_softmax,
    segment_sum,
    gather_rows,
)
from .layers import (
    Module,
    Linear,
    VariationalLinear,
    bayesian_linear_forward,
    kl_divergence,
    BatchNorm1d,
    LSTMCell,
    lstm_cell,
    Dropout,
)
from .optim import OptimizerState, adamw_step, clip_gradients, StepDecaySchedule
from .checkpoint import save_checkpoint, load_checkpoint, CheckpointFormatError

__all__ = [
    "Tensor", "parameter", "no_grad", "zero_grads",
    "finite_diff_check", "scatter_softmax", "segment_sum", "gather_rows",
    "Module", "Linear", "VariationalLinear", "bayesian_linear_forward",
    "kl_divergence", "BatchNorm1d", "LSTMCell", "lstm_cell", "Dropout",
    "OptimizerState", "adamw_step", "clip_gradients", "StepDecaySchedule",
    "save_checkpoint", "load_checkpoint", "CheckpointFormatError",
]
