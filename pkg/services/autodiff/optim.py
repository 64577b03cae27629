"""
Optimizador Adam con corrección de sesgo
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, Mapping

import numpy as np

from services.autodiff.engine import Tensor
from services.errors import ConfigError, DimensionError, NumericError

logger = logging.getLogger(__name__)


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigError(f"lr debe ser > 0 (recibido {self.lr})")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigError(f"betas fuera de rango: ({self.beta1}, {self.beta2})")


def adam_step(params: Mapping[str, Tensor], grads: Mapping[str, np.ndarray],
              state: AdamState) -> AdamState:
    """Actualiza `params` in situ y devuelve el estado avanzado un paso"""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            bad = np.argwhere(~np.isfinite(g))[0].tolist()
            raise NumericError(
                f"gradiente no finito en el parámetro '{name}' (índice {bad})",
                {"parameter": name, "index": bad, "step": state.step},
            )
        if g.shape != params[name].shape:
            raise DimensionError(f"adam_step[{name}]", params[name].shape, g.shape)

    state.step += 1
    t = state.step
    correction1 = 1.0 - state.beta1 ** t
    correction2 = 1.0 - state.beta2 ** t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * (g * g)
        state.m[name] = m
        state.v[name] = v
        m_hat = m / correction1
        v_hat = v / correction2
        p.data -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return state
