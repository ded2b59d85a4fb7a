"""
Tensor autodiff package
Dense numpy tensors with reverse-mode automatic differentiation
"""

from .gradcheck import grad_check
from .ops import (
    Function,
    abs,
    add,
    broadcast_to,
    elementwise,
    getitem,
    hadamard,
    matmul,
    mean,
    pad,
    relu,
    reshape,
    safe_reciprocal,
    safe_rsqrt,
    scale,
    sigmoid,
    sub,
    sum,
    tanh,
    transpose,
)
from .tensor import (
    Tape,
    TapeRecord,
    Tensor,
    as_tensor,
    backward,
    current_tape,
    get_precision,
    no_grad,
    ones,
    parameter,
    precision,
    set_precision,
    zeros,
)

__all__ = [
    "Function",
    "Tape",
    "TapeRecord",
    "Tensor",
    "abs",
    "add",
    "as_tensor",
    "backward",
    "broadcast_to",
    "current_tape",
    "elementwise",
    "get_precision",
    "getitem",
    "grad_check",
    "hadamard",
    "matmul",
    "mean",
    "no_grad",
    "ones",
    "pad",
    "parameter",
    "precision",
    "relu",
    "reshape",
    "safe_reciprocal",
    "safe_rsqrt",
    "scale",
    "set_precision",
    "sigmoid",
    "sub",
    "sum",
    "tanh",
    "transpose",
    "zeros",
]
