"""Adam optimizer with bias correction.

Defaults: lr 1e-3, beta1 0.9, beta2 0.999, eps 1e-8. A non-finite gradient
aborts the step with an error instead of silently corrupting the parameters.
"""
from __future__ import annotations

import numpy as np

from .tensor import Tensor


class NonFiniteGradientError(FloatingPointError):
    pass


class Adam:
    def __init__(self, params: dict[str, Tensor], lr=1e-3, beta1=0.9, beta2=0.999,
                 eps=1e-8):
        self.params = dict(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def step(self, grads: dict[str, np.ndarray] | None = None):
        """Apply one bias-corrected update. Gradients default to ``p.grad``."""
        if grads is None:
            grads = {}
            for name, p in self.params.items():
                if p.grad is None:
                    raise ValueError(f"parameter {name!r} has no gradient")
                grads[name] = p.grad
        self.t += 1
        for name, p in self.params.items():
            g = np.asarray(grads[name], dtype=p.data.dtype)
            if g.shape != p.data.shape:
                raise ValueError(f"gradient shape mismatch for {name!r}: "
                                 f"{g.shape} vs {p.data.shape}")
            if not np.all(np.isfinite(g)):
                raise NonFiniteGradientError(f"non-finite gradient for {name!r} "
                                             f"at step {self.t}")
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * (g * g)
            m_hat = m / (1 - self.beta1 ** self.t)
            v_hat = v / (1 - self.beta2 ** self.t)
            p.data = p.data - (self.lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(p.data.dtype)

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None
