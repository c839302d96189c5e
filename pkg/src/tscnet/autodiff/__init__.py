"""Tensor core: dense tensors, reverse-mode autodiff, gradient oracle."""
from .tensor import (
    AllocationTracker,
    Tensor,
    grad_enabled,
    no_grad,
    track_allocations,
)
from . import ops  # noqa: F401  (attaches Tensor operators)
from .ops import (
    activation,
    adaptive_avg_pool,
    add,
    as_tensor,
    bilinear_upsample,
    channelwise_attention,
    clip,
    concat,
    conv2d,
    deconv2d,
    div,
    global_avg_pool,
    linear,
    log,
    matmul,
    max_,
    maxpool2x2,
    mean_,
    mul,
    neg,
    pool_resize,
    relu,
    reshape,
    sigmoid,
    softmax_lastdim,
    standard_attention_reference,
    sub,
    sum_,
    transpose,
)
from .gradcheck import GradCheckReport, ParamCheck, finite_diff_check

__all__ = [
    "AllocationTracker",
    "GradCheckReport",
    "ParamCheck",
    "Tensor",
    "activation",
    "adaptive_avg_pool",
    "add",
    "as_tensor",
    "bilinear_upsample",
    "channelwise_attention",
    "clip",
    "concat",
    "conv2d",
    "deconv2d",
    "div",
    "finite_diff_check",
    "global_avg_pool",
    "grad_enabled",
    "linear",
    "log",
    "matmul",
    "max_",
    "maxpool2x2",
    "mean_",
    "mul",
    "neg",
    "no_grad",
    "pool_resize",
    "relu",
    "reshape",
    "sigmoid",
    "softmax_lastdim",
    "standard_attention_reference",
    "sub",
    "sum_",
    "track_allocations",
    "transpose",
]
