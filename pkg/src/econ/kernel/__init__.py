from .optim import OptimizerConfig, adam_step
from .ops import (
    attention_params,
    cosine_sim,
    cosine_sim_node,
    finite_diff_check,
    linear,
    multi_head_attention,
    sigmoid,
    softmax,
)
from .params import CHECKPOINT_VERSION, ParamStore, uniform_init
from .tensor import NonFiniteError, Tensor, concat, stack

__all__ = [
    "CHECKPOINT_VERSION",
    "NonFiniteError",
    "OptimizerConfig",
    "ParamStore",
    "Tensor",
    "adam_step",
    "attention_params",
    "concat",
    "cosine_sim",
    "cosine_sim_node",
    "finite_diff_check",
    "linear",
    "multi_head_attention",
    "sigmoid",
    "softmax",
    "stack",
    "uniform_init",
]
