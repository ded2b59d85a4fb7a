"""
Adam with L2 weight decay over named parameters
"""

from typing import Dict, Optional

import numpy as np
import structlog

from ..autodiff import Tensor

logger = structlog.get_logger(__name__)


class AdamOptimizer:
    """Adam updates applied in place to a name -> Tensor map"""

    def __init__(
        self,
        params: Dict[str, Tensor],
        lr: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        weight_decay: float = 0.0,
    ):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.steps = 0
        self.first: Dict[str, np.ndarray] = {}
        self.second: Dict[str, np.ndarray] = {}

    def zero_grad(self) -> None:
        for tensor in self.params.values():
            tensor.zero_grad()

    def step(self) -> None:
        """One update; a parameter without a gradient sees only weight decay"""
        self.steps += 1
        correction1 = 1.0 - self.beta1 ** self.steps
        correction2 = 1.0 - self.beta2 ** self.steps

        for name, tensor in self.params.items():
            data = tensor.data.astype(np.float64)
            grad = (
                np.zeros_like(data)
                if tensor.grad is None
                else tensor.grad.astype(np.float64)
            )
            if self.weight_decay:
                grad = grad + self.weight_decay * data

            m = self.first.get(name)
            v = self.second.get(name)
            m = (1.0 - self.beta1) * grad if m is None else self.beta1 * m + (1.0 - self.beta1) * grad
            v = (1.0 - self.beta2) * grad * grad if v is None else self.beta2 * v + (1.0 - self.beta2) * grad * grad
            self.first[name], self.second[name] = m, v

            update = self.lr * (m / correction1) / (np.sqrt(v / correction2) + self.eps)
            tensor.data = (data - update).astype(tensor.data.dtype)

    def state_dict(self) -> Dict[str, np.ndarray]:
        state = {f"m.{k}": v for k, v in self.first.items()}
        state.update({f"v.{k}": v for k, v in self.second.items()})
        return state

    def load_state(self, state: Dict[str, np.ndarray], steps: Optional[int] = None) -> None:
        self.first = {k[2:]: v for k, v in state.items() if k.startswith("m.")}
        self.second = {k[2:]: v for k, v in state.items() if k.startswith("v.")}
        if steps is not None:
            self.steps = steps
