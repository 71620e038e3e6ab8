"""Differentiable numeric core: tensors, tape, primitives, Adam, checks, I/O."""
from .engine import (
    DiffTensor,
    NumericError,
    Tape,
    TapeError,
    active_tape,
    backward,
    constant,
    param,
    record_op,
    set_validation,
    validation_enabled,
    zero_grads,
)
from .ops import (
    add,
    affine,
    clip,
    concat,
    div,
    exp,
    gelu,
    layer_norm,
    log,
    matmul,
    mean_,
    mul,
    neg,
    relu,
    reshape,
    scaled_attention,
    slice_,
    softmax,
    sub,
    sum_,
    tanh,
    tanh_squash_logdet,
    transpose,
)
from .optim import AdamState, adam_step
from .gradcheck import GradCheckReport, grad_check
from .container import ContainerError, load_tensors, save_tensors

__all__ = [
    "AdamState",
    "ContainerError",
    "DiffTensor",
    "GradCheckReport",
    "NumericError",
    "Tape",
    "TapeError",
    "active_tape",
    "adam_step",
    "add",
    "affine",
    "backward",
    "clip",
    "concat",
    "constant",
    "div",
    "exp",
    "gelu",
    "grad_check",
    "layer_norm",
    "load_tensors",
    "log",
    "matmul",
    "mean_",
    "mul",
    "neg",
    "param",
    "record_op",
    "relu",
    "reshape",
    "save_tensors",
    "scaled_attention",
    "set_validation",
    "slice_",
    "softmax",
    "sub",
    "sum_",
    "tanh",
    "tanh_squash_logdet",
    "transpose",
    "validation_enabled",
    "zero_grads",
]
