"""Adam with bias correction, operating on named parameter tensors."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

from .autodiff import Tensor

DEFAULT_BETAS = (0.9, 0.999)
DEFAULT_EPS = 1e-8


@dataclass
class AdamState:
    """First/second moment accumulators and the shared step counter."""

    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(params: Dict[str, Tensor], grads: Dict[str, np.ndarray],
              state: AdamState, lr: float,
              betas: Tuple[float, float] = DEFAULT_BETAS,
              eps: float = DEFAULT_EPS) -> AdamState:
    """One Adam update, in place on the parameter tensors.

    theta <- theta - lr * m_hat / (sqrt(v_hat) + eps), with m_hat/v_hat the
    bias-corrected moment estimates. Moments are kept in float64.
    """
    b1, b2 = betas
    state.t += 1
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape "
                             f"{p.shape} for '{name}'")
        g = np.asarray(g, dtype=np.float64)
        m = state.m.get(name)
        if m is None:
            m = np.zeros(p.shape, dtype=np.float64)
            state.m[name] = m
            state.v[name] = np.zeros(p.shape, dtype=np.float64)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        step = lr * (m / c1) / (np.sqrt(v / c2) + eps)
        p.data = (p.data.astype(np.float64) - step).astype(p.dtype)
    return state
