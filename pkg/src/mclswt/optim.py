"""Adam with decoupled weight decay.

Weight decay is applied directly to the parameter values rather than folded
into the gradient, matching the AdamW convention; decay 0.05 is the package
default throughout.
"""

from __future__ import annotations

import numpy as np

from .errors import OptimizerError
from .tensor import Tensor


class Adam:
    """Adam over a named parameter dict, with decoupled weight decay."""

    def __init__(self, params: dict[str, Tensor], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
                 weight_decay: float = 0.05):
        if not 0.0 <= beta1 < 1.0 or not 0.0 <= beta2 < 1.0:
            raise OptimizerError(f"betas must lie in [0,1): got {beta1}, {beta2}")
        if lr < 0 or weight_decay < 0:
            raise OptimizerError("lr and weight_decay must be non-negative")
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = {name: np.zeros_like(p.data) for name, p in params.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in params.items()}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def step(self) -> None:
        """One update: Adam moments with bias correction, then decoupled decay."""
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, p in self.params.items():
            if p.grad is None:
                raise OptimizerError(f"parameter {name!r} has no gradient; "
                                     "run backward() before step()")
            g = p.grad
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            m_hat = m / bc1
            v_hat = v / bc2
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
            if self.weight_decay:
                p.data -= self.lr * self.weight_decay * p.data
