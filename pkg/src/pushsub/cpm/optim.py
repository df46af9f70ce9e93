from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_step(params: dict, grads: dict, moments: dict, t: int, cfg: AdamConfig = AdamConfig()):
    """One bias-corrected Adam update.

    ``moments`` maps each parameter name to an ``(m, v)`` pair (created on first
    use).  Returns new ``(params, moments)``; inputs are not modified.
    """
    if t < 1:
        raise ValueError("Adam step counter starts at 1")
    bc1 = 1.0 - cfg.beta1 ** t
    bc2 = 1.0 - cfg.beta2 ** t
    new_p, new_m = {}, {}
    for k, p in params.items():
        g = grads[k]
        m, v = moments.get(k, (np.zeros_like(p), np.zeros_like(p)))
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * (g * g)
        new_p[k] = p - cfg.lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)
        new_m[k] = (m, v)
    return new_p, new_m


class Adam:
    """Stateful wrapper around :func:`adam_step`."""

    def __init__(self, cfg: AdamConfig = AdamConfig()):
        self.cfg = cfg
        self.moments: dict = {}
        self.t = 0

    def step(self, params: dict, grads: dict) -> dict:
        self.t += 1
        params, self.moments = adam_step(params, grads, self.moments, self.t, self.cfg)
        return params
