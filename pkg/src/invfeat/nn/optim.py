"""Adam over a flat parameter dict."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError(f"learning rate must be positive, got {self.lr}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")


class Adam:
    def __init__(self, params: dict, lr: float = 0.01, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.params = params
        self.state = AdamState(lr, beta1, beta2, eps)
        for k in sorted(params):
            self.state.m[k] = np.zeros_like(params[k])
            self.state.v[k] = np.zeros_like(params[k])

    def step(self, grads: dict):
        s = self.state
        s.step += 1
        c1 = 1.0 - s.beta1**s.step
        c2 = 1.0 - s.beta2**s.step
        for k in sorted(self.params):
            g = grads.get(k)
            if g is None:
                continue
            m = s.m[k]
            v = s.v[k]
            m *= s.beta1
            m += (1.0 - s.beta1) * g
            v *= s.beta2
            v += (1.0 - s.beta2) * g * g
            # in place so views held by the model stay valid
            self.params[k] -= s.lr * (m / c1) / (np.sqrt(v / c2) + s.eps)
