"""
Objetivo de adaptación: pérdida de destilación anulada linealmente por α
"""
from typing import Any, Dict

import numpy as np
from pydantic import BaseModel

from services.autodiff import Tensor
from services.autodiff import engine as ad
from services.errors import ConfigError, DimensionError


class LossBreakdown(BaseModel):
    step: int
    alpha: float
    distill: float
    task: float
    total: float

    def as_row(self) -> Dict[str, Any]:
        return self.model_dump()


def alpha_schedule(step: int, horizon: int) -> float:
    """α = max(0, 1 - step/horizon)"""
    if horizon <= 0:
        raise ConfigError(f"horizon debe ser > 0 (recibido {horizon})")
    if step < 0:
        raise ConfigError(f"step debe ser ≥ 0 (recibido {step})")
    return max(0.0, 1.0 - step / horizon)


def distill_loss(adapted: Tensor, expert) -> Tensor:
    """MSE entre la salida del neck y las features del experto"""
    expert_data = expert.data if isinstance(expert, Tensor) else np.asarray(expert, dtype=np.float64)
    if adapted.shape != expert_data.shape:
        raise DimensionError("distill_loss", adapted.shape, expert_data.shape)
    return ad.mse(adapted, expert if isinstance(expert, Tensor) else Tensor(expert_data))


def combined_loss(alpha: float, distill: float, task: float) -> float:
    if not 0.0 <= alpha <= 1.0:
        raise ConfigError(f"α fuera de [0, 1]: {alpha}")
    return alpha * distill + (1.0 - alpha) * task


def combined_tensor(alpha: float, distill: Tensor, task: Tensor) -> Tensor:
    """Misma suma ponderada que `combined_loss`, diferenciable"""
    if not 0.0 <= alpha <= 1.0:
        raise ConfigError(f"α fuera de [0, 1]: {alpha}")
    return ad.add(ad.scale(distill, alpha), ad.scale(task, 1.0 - alpha))
