"""
Finite-difference gradient checking
Compares tape gradients against central differences
"""

from typing import Callable

import numpy as np

from .tensor import Tensor, backward, current_tape, no_grad


def grad_check(
    f: Callable[[Tensor], Tensor], x: Tensor, eps: float = 1e-5
) -> float:
    """Max over components of |analytic - numeric| / max(1, |numeric|)

    `f` must be pure. Run under float64 precision for meaningful results;
    NaN anywhere propagates into the returned value.
    """
    point = Tensor(x.data.copy(), requires_grad=True)
    current_tape().reset()
    out = f(point)
    if out.requires_grad:
        grads = backward(out)
        analytic = grads[point.uid].data.astype(np.float64)
    else:
        analytic = np.zeros(x.shape, dtype=np.float64)

    base = x.data.astype(np.float64)
    numeric = np.zeros_like(base)
    with no_grad():
        for idx in np.ndindex(base.shape):
            plus, minus = base.copy(), base.copy()
            plus[idx] += eps
            minus[idx] -= eps
            f_plus = f(Tensor(plus)).item()
            f_minus = f(Tensor(minus)).item()
            numeric[idx] = (f_plus - f_minus) / (2.0 * eps)

    current_tape().reset()
    if base.size == 0:
        return 0.0
    error = np.abs(analytic - numeric) / np.maximum(1.0, np.abs(numeric))
    if np.isnan(error).any():
        return float("nan")
    return float(error.max())
