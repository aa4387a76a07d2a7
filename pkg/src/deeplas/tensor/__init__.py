"""Dense tensors with reverse-mode automatic differentiation."""
from . import ops
from .core import Record, Tape, Tensor, as_tensor, backward, current_tape, default_dtype, no_grad, precision
from .gradcheck import finite_difference_check, finite_difference_report
from .init import Constant, TruncatedNormal, Uniform, Zeros, tensor_init
from .ops import (
    add,
    concat,
    conv2d,
    conv_as_matrix,
    conv_output_extent,
    div,
    exp,
    getitem,
    log,
    log_softmax,
    lstm_sequence,
    masked_fill,
    matmul,
    mean,
    mul,
    neg,
    power,
    relu,
    reshape,
    sigmoid,
    softmax,
    sub,
    take,
    tanh,
    time_reverse,
    transpose,
    variance,
)
from .ops import sum as reduce_sum

__all__ = [
    "Tensor", "Tape", "Record", "as_tensor", "backward", "current_tape", "default_dtype", "no_grad",
    "precision", "finite_difference_check", "finite_difference_report", "tensor_init", "Uniform",
    "TruncatedNormal", "Zeros", "Constant", "ops", "add", "sub", "mul", "div", "neg", "power", "exp",
    "log", "sigmoid", "tanh", "relu", "softmax", "log_softmax", "masked_fill", "reduce_sum", "mean",
    "variance", "reshape", "transpose", "concat", "getitem", "take", "time_reverse", "matmul",
    "conv2d", "conv_output_extent", "conv_as_matrix", "lstm_sequence",
]
