"""
Tareas de escritorio: cabezas congeladas (identidad o mapa lineal con semilla)
con pérdida MSE
"""
import hashlib
import logging
import math
from typing import Optional

import numpy as np
from pydantic import BaseModel, Field, model_validator

from services.autodiff import Tensor
from services.autodiff import engine as ad
from services.errors import ConfigError, DimensionError, InvariantViolation

logger = logging.getLogger(__name__)


class TaskSpec(BaseModel):
    task_id: str = "task"
    head: str = Field("linear", pattern="^(identity|linear)$")
    out_dim: Optional[int] = Field(None, ge=1)
    seed: int = 0
    target_role: str = "expert1"
    loss: str = Field("mse", pattern="^mse$")

    @model_validator(mode="after")
    def _linear_needs_dim(self):
        if self.head == "linear" and self.out_dim is None:
            raise ValueError("una cabeza lineal necesita out_dim")
        return self


class FrozenHead:
    """Cabeza de tarea inmutable tras su creación"""

    def __init__(self, spec: TaskSpec, in_dim: int):
        if spec.head == "identity":
            weight = None
            out_dim = in_dim
        else:
            rng = np.random.default_rng(spec.seed)
            weight = rng.standard_normal((in_dim, spec.out_dim)) / math.sqrt(in_dim)
            weight.setflags(write=False)
            out_dim = spec.out_dim
        object.__setattr__(self, "spec", spec)
        object.__setattr__(self, "in_dim", in_dim)
        object.__setattr__(self, "out_dim", out_dim)
        object.__setattr__(self, "_weight", weight)
        object.__setattr__(self, "_weight_t", None if weight is None else Tensor(weight, name="head.weight"))
        object.__setattr__(self, "_digest", self.digest())

    def __setattr__(self, name, value):
        raise InvariantViolation(f"la cabeza de '{self.spec.task_id}' está congelada (intento de asignar '{name}')")

    @property
    def weight(self) -> Optional[np.ndarray]:
        return self._weight

    def digest(self) -> str:
        h = hashlib.sha256(f"{self.spec.head}:{self.in_dim}:{self.out_dim}".encode())
        if self._weight is not None:
            h.update(np.ascontiguousarray(self._weight, dtype="<f8").tobytes())
        return h.hexdigest()

    def verify(self) -> None:
        if self.digest() != self._digest:
            raise InvariantViolation(f"la cabeza de '{self.spec.task_id}' cambió durante el entrenamiento")

    def apply(self, features: np.ndarray) -> np.ndarray:
        if features.shape[-1] != self.in_dim:
            raise DimensionError("head", features.shape, (self.in_dim,))
        if self._weight is None:
            return np.array(features, dtype=np.float64)
        return features @ self._weight

    def forward(self, features: Tensor) -> Tensor:
        """(N, T, D) -> (N·T, K)"""
        if features.shape[-1] != self.in_dim:
            raise DimensionError("head", features.shape, (self.in_dim,))
        flat = ad.reshape(features, (-1, self.in_dim))
        if self._weight_t is None:
            return flat
        return ad.matmul(flat, self._weight_t)


def build_head(spec: TaskSpec, in_dim: int) -> FrozenHead:
    if spec.head == "linear" and spec.out_dim > in_dim:
        logger.warning(f"cabeza lineal de '{spec.task_id}' expande {in_dim} -> {spec.out_dim}")
    if in_dim < 1:
        raise ConfigError(f"dimensión de entrada inválida para la cabeza: {in_dim}")
    return FrozenHead(spec, in_dim)
