"""Adam / AdamW on a ParamStore."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .params import ParamStore


@dataclass
class OptimizerConfig:
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    weight_decay: float = 0.0  # > 0 selects the AdamW variant

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")


def adam_step(store: ParamStore, cfg: OptimizerConfig):
    """One bias-corrected Adam update; zeroes gradients and bumps the step count.

    Missing gradient slots count as zero gradient. NaN gradients abort with
    the offending parameter's name.
    """
    store.step_count += 1
    t = store.step_count
    bc1 = 1.0 - cfg.beta1 ** t
    bc2 = 1.0 - cfg.beta2 ** t
    for name, p in store.items():
        g = p.grad if p.grad is not None else np.zeros_like(p.value)
        if not np.all(np.isfinite(g)):
            raise ValueError(f"non-finite gradient for parameter '{name}'")
        m, v = store.moments(name)
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * g * g
        update = (m / bc1) / (np.sqrt(v / bc2) + cfg.epsilon)
        if cfg.weight_decay > 0:
            p.value -= cfg.learning_rate * cfg.weight_decay * p.value
        p.value -= cfg.learning_rate * update
    store.zero_grads()
