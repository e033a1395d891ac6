"""First-order optimizer (Adam-style moments) over named parameter arrays."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["AdamConfig", "Adam"]


@dataclass
class AdamConfig:
    step: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float | None = None


class Adam:
    """Maximizer: ``step`` moves parameters along +gradient."""

    def __init__(self, values, cfg=None):
        self.values = values
        self.cfg = cfg or AdamConfig()
        self._m = {k: np.zeros_like(v) for k, v in values.items()}
        self._v = {k: np.zeros_like(v) for k, v in values.items()}
        self._t = 0

    def step(self, grads):
        cfg = self.cfg
        if cfg.clip_norm is not None:
            total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
            if total > cfg.clip_norm:
                scale = cfg.clip_norm / total
                grads = {k: g * scale for k, g in grads.items()}
        self._t += 1
        b1t = 1.0 - cfg.beta1**self._t
        b2t = 1.0 - cfg.beta2**self._t
        for k, g in grads.items():
            self._m[k] = cfg.beta1 * self._m[k] + (1.0 - cfg.beta1) * g
            self._v[k] = cfg.beta2 * self._v[k] + (1.0 - cfg.beta2) * g * g
            mhat = self._m[k] / b1t
            vhat = self._v[k] / b2t
            self.values[k] = self.values[k] + cfg.step * mhat / (np.sqrt(vhat) + cfg.eps)
