"""Adam-style optimizer over dicts of named parameter arrays."""

from __future__ import annotations

import numpy as np


class Adam:
    """Per-parameter adaptive step sizes with bias-corrected moments."""

    def __init__(self, params: dict, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(v, dtype=np.float64) for k, v in params.items()}
        self.v = {k: np.zeros_like(v, dtype=np.float64) for k, v in params.items()}
        self.t = 0

    def step(self, grads: dict) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for key, g in grads.items():
            if key not in self.params:
                raise KeyError(f"gradient for unknown parameter {key!r}")
            m = self.m[key]
            v = self.v[key]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(g)
            update = self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)
            p = self.params[key]
            p -= update.astype(p.dtype, copy=False)
