"""
Conjuntos de features: matriz N×D (o N×T×D por tokens) con rol y procedencia
"""
import hashlib
import logging
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from services.errors import DataError, DimensionError, InsufficientDataError, UsageError

logger = logging.getLogger(__name__)

ROLES = ("adapted", "expert", "encoder", "latent")
DTYPES = {"f32": "<f4", "f64": "<f8"}
POOLING_MODES = ("mean", "flatten")


@dataclass
class FeatureSet:
    data: np.ndarray
    role: str = "latent"
    name: str = ""
    source: str = "memory"
    dtype: str = "f64"
    meta: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.role not in ROLES:
            raise UsageError(f"rol desconocido '{self.role}'; válidos: {list(ROLES)}")
        if self.dtype not in DTYPES:
            raise UsageError(f"dtype desconocido '{self.dtype}'; válidos: {list(DTYPES)}")
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim not in (2, 3):
            raise DimensionError("FeatureSet", self.data.shape)
        if self.data.shape[0] < 2:
            raise InsufficientDataError(f"FeatureSet '{self.name}' necesita N ≥ 2 (N={self.data.shape[0]})")
        check_finite(self.data, where=self.name or self.source)

    @property
    def n(self) -> int:
        return int(self.data.shape[0])

    @property
    def dim(self) -> int:
        return int(self.data.shape[-1])

    @property
    def tokens(self) -> Optional[int]:
        return int(self.data.shape[1]) if self.data.ndim == 3 else None

    @property
    def shape(self):
        return self.data.shape

    def digest(self) -> str:
        """SHA-256 de la forma y los valores f64 little-endian"""
        h = hashlib.sha256(repr(self.data.shape).encode("utf-8"))
        h.update(np.ascontiguousarray(self.data, dtype="<f8").tobytes())
        return h.hexdigest()

    def with_data(self, data: np.ndarray, **changes) -> "FeatureSet":
        fields = {"role": self.role, "name": self.name, "source": self.source, "dtype": self.dtype,
                  "meta": dict(self.meta)}
        fields.update(changes)
        return FeatureSet(data=data, **fields)


def check_finite(data: np.ndarray, where: str = "") -> None:
    bad = ~np.isfinite(data)
    if bad.any():
        index = tuple(int(i) for i in np.argwhere(bad)[0])
        raise DataError(f"valor no finito en {where or 'features'} índice {index}", index=index, path=where or None)


def check_paired(a: FeatureSet, b: FeatureSet, same_shape: bool = False) -> None:
    """Los pares (adaptado, experto) deben compartir N y orden de muestras"""
    if a.n != b.n:
        raise DimensionError("pairing", a.shape, b.shape)
    if same_shape and a.shape != b.shape:
        raise DimensionError("pairing", a.shape, b.shape)


def pool_tokens(fs: FeatureSet, mode: str = "mean") -> np.ndarray:
    """Convierte N×T×D en una matriz de muestras: promedio sobre T o aplanado (N·T)×D"""
    if fs.data.ndim == 2:
        return fs.data
    if mode == "mean":
        return fs.data.mean(axis=1)
    if mode == "flatten":
        return fs.data.reshape(-1, fs.data.shape[-1])
    raise UsageError(f"pooling desconocido '{mode}'; válidos: {list(POOLING_MODES)}")
