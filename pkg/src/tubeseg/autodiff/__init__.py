"""Tape-based reverse-mode autodiff on dense float64 tensors."""

from .gradcheck import finite_difference_check
from .ops import (
    absolute,
    add,
    as_tensor,
    concat,
    constant,
    conv2d_3x3,
    div,
    exp,
    expand0,
    layer_norm,
    log,
    log_softmax,
    matmul,
    mean,
    mul,
    neg,
    normalize_rows,
    relu,
    reshape,
    scaled_dot_attention,
    sigmoid,
    slice_axis,
    softmax_axis,
    sqrt,
    stack0,
    sub,
    sum_axis,
    swap_last2,
    transpose,
    tsum,
)
from .tensor import Tape, Tensor, current_tape

__all__ = [
    "Tape",
    "Tensor",
    "absolute",
    "add",
    "as_tensor",
    "concat",
    "constant",
    "conv2d_3x3",
    "current_tape",
    "div",
    "exp",
    "expand0",
    "finite_difference_check",
    "layer_norm",
    "log",
    "log_softmax",
    "matmul",
    "mean",
    "mul",
    "neg",
    "normalize_rows",
    "relu",
    "reshape",
    "scaled_dot_attention",
    "sigmoid",
    "slice_axis",
    "softmax_axis",
    "sqrt",
    "stack0",
    "sub",
    "sum_axis",
    "swap_last2",
    "transpose",
    "tsum",
]
