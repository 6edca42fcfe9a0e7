"""Minimal dense-tensor substrate with reverse-mode differentiation."""

from .tensor import ShapeError, Tape, TapeError, Tensor, as_tensor, backward, current_tape
from .ops import (
    absolute,
    add,
    concat,
    conv2d,
    conv_output_size,
    div,
    grid_sample_bilinear,
    matmul,
    mean,
    mul,
    neg,
    relu,
    reshape,
    sigmoid,
    softmax,
    square,
    sub,
    sum,
    transpose,
)
from .gradcheck import GradCheckReport, NonFiniteError, grad_check
from .checkpoint import CheckpointError, load_into, read_checkpoint, save_checkpoint
from .optim import Adam

__all__ = [
    "Adam", "CheckpointError", "GradCheckReport", "NonFiniteError", "ShapeError", "Tape",
    "TapeError", "Tensor", "absolute", "add", "as_tensor", "backward", "concat", "conv2d",
    "conv_output_size", "current_tape", "div", "grad_check", "grid_sample_bilinear",
    "load_into", "matmul", "mean", "mul", "neg", "read_checkpoint", "relu", "reshape",
    "save_checkpoint", "sigmoid", "softmax", "square", "sub", "sum", "transpose",
]
