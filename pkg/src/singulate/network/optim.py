"""Adam with optional inverse-time learning-rate decay."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    decay: float = 0.0

    def __post_init__(self):
        if self.lr <= 0 or not (0 <= self.beta1 < 1) or not (0 <= self.beta2 < 1):
            raise ValueError(f"invalid Adam settings {self}")

    def to_dict(self) -> dict:
        return asdict(self)


def adam_update(w, g, m, v, step: int, cfg: AdamConfig):
    """One bias-corrected Adam update, in place. ``step`` is 1-based.

    Returns the updated ``(w, m, v)`` arrays (the same objects).
    """
    lr = cfg.lr / (1.0 + cfg.decay * (step - 1))
    m *= cfg.beta1
    m += (1.0 - cfg.beta1) * g
    v *= cfg.beta2
    v += (1.0 - cfg.beta2) * (g * g)
    m_hat = m / (1.0 - cfg.beta1 ** step)
    v_hat = v / (1.0 - cfg.beta2 ** step)
    w -= (lr * m_hat / (np.sqrt(v_hat) + cfg.eps)).astype(w.dtype, copy=False)
    return w, m, v


def adam_step(params, grads, cfg: AdamConfig) -> None:
    """Apply one Adam step to every parameter tensor of ``params``."""
    params.step += 1
    for w, g, m, v in zip(params.weights, grads, params.m, params.v):
        for k in w:
            adam_update(w[k], g[k].astype(w[k].dtype, copy=False), m[k], v[k], params.step, cfg)
