"""
Métricas de distribución de features: distancia de Fréchet, distancias de
kernel (RBF y polinomial, MMD² insesgado), coseno pareado y MI 1D gaussiana.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Union

import numpy as np
from pydantic import BaseModel, Field
from scipy.spatial.distance import cdist, pdist

from services.errors import DimensionError, InsufficientDataError, NumericError
from services.featio.features import FeatureSet, pool_tokens

logger = logging.getLogger(__name__)

EIG_CLAMP_RELATIVE = 1e-8
RHO_CLAMP = 1.0 - 1e-12
MEDIAN_SUBSAMPLE = 2000
GRAM_BLOCK = 1024

ArrayLike = Union[FeatureSet, np.ndarray]


def as_samples(features: ArrayLike, pooling: str = "mean") -> np.ndarray:
    if isinstance(features, FeatureSet):
        return pool_tokens(features, pooling)
    arr = np.asarray(features, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim == 3:
        arr = arr.mean(axis=1) if pooling == "mean" else arr.reshape(-1, arr.shape[-1])
    return arr


# ---- Fréchet ----

@dataclass
class GaussianSummary:
    mean: np.ndarray
    cov: np.ndarray
    n: int


def summarize(features: ArrayLike, pooling: str = "mean") -> GaussianSummary:
    """Media muestral y covarianza insesgada (divisor N-1), simetrizada"""
    x = as_samples(features, pooling)
    n = x.shape[0]
    if n < 2:
        raise InsufficientDataError(f"summarize necesita N ≥ 2 (N={n})")
    mu = x.mean(axis=0)
    centered = x - mu
    cov = centered.T @ centered / (n - 1)
    cov = 0.5 * (cov + cov.T)
    return GaussianSummary(mean=mu, cov=cov, n=n)


def _sqrtm_psd(m: np.ndarray) -> np.ndarray:
    """Raíz cuadrada simétrica por autodescomposición; autovalores negativos a 0"""
    m = 0.5 * (m + m.T)
    w, v = np.linalg.eigh(m)
    top = max(float(w.max(initial=0.0)), 0.0)
    w = np.where(w > EIG_CLAMP_RELATIVE * top, w, 0.0)
    return (v * np.sqrt(w)) @ v.T


def frechet_distance(a: GaussianSummary, b: GaussianSummary) -> float:
    """‖μ_a-μ_b‖² + Tr(Σ_a + Σ_b - 2(Σ_a^{1/2} Σ_b Σ_a^{1/2})^{1/2}), acotada a ≥ 0"""
    if a.mean.shape != b.mean.shape:
        raise DimensionError("frechet_distance", a.mean.shape, b.mean.shape)
    if np.array_equal(a.mean, b.mean) and np.array_equal(a.cov, b.cov):
        return 0.0
    diff = a.mean - b.mean
    root_a = _sqrtm_psd(a.cov)
    cross = _sqrtm_psd(root_a @ b.cov @ root_a)
    fd = float(diff @ diff + np.trace(a.cov) + np.trace(b.cov) - 2.0 * np.trace(cross))
    return max(0.0, fd)


# ---- Distancias de kernel ----

class KernelConfig(BaseModel):
    kind: str = Field("rbf", pattern="^(rbf|poly)$")
    gamma: Optional[float] = Field(None, gt=0)  # None: heurística de la mediana
    degree: int = Field(3, ge=1)
    scale: Optional[float] = Field(None, gt=0)  # None: 1/D
    offset: float = 1.0
    subsample_seed: int = 0


def median_heuristic_gamma(x: np.ndarray, y: np.ndarray, seed: int = 0) -> float:
    """γ = 1/(2·mediana²) de distancias por pares sobre ≤2000 muestras combinadas"""
    rng = np.random.default_rng(seed)
    half = MEDIAN_SUBSAMPLE // 2

    def _take(a):
        if a.shape[0] <= half:
            return a
        return a[np.sort(rng.choice(a.shape[0], half, replace=False))]

    pooled = np.concatenate([_take(x), _take(y)], axis=0)
    median = float(np.median(pdist(pooled, metric="euclidean")))
    if not median > 0:
        raise NumericError("ancho de banda degenerado: mediana de distancias = 0")
    return 1.0 / (2.0 * median * median)


def _kernel_block(a: np.ndarray, b: np.ndarray, cfg: KernelConfig, gamma: float, scale: float) -> np.ndarray:
    if cfg.kind == "rbf":
        return np.exp(-gamma * cdist(a, b, metric="sqeuclidean"))
    return (scale * (a @ b.T) + cfg.offset) ** cfg.degree


def _kernel_diag(a: np.ndarray, cfg: KernelConfig, scale: float) -> np.ndarray:
    if cfg.kind == "rbf":
        return np.ones(a.shape[0])
    return (scale * np.einsum("ij,ij->i", a, a) + cfg.offset) ** cfg.degree


def _gram_sum(a: np.ndarray, b: np.ndarray, cfg: KernelConfig, gamma: float, scale: float) -> float:
    # suma por bloques de filas con orden de reducción fijo
    total = 0.0
    for start in range(0, a.shape[0], GRAM_BLOCK):
        total += float(_kernel_block(a[start:start + GRAM_BLOCK], b, cfg, gamma, scale).sum())
    return total


def kernel_distance(x: ArrayLike, y: ArrayLike, cfg: Optional[KernelConfig] = None,
                    pooling: str = "mean") -> float:
    """
    Estimador insesgado de MMD²: media fuera de la diagonal de k(x,x') +
    media fuera de la diagonal de k(y,y') - 2·media de k(x,y). Puede ser levemente negativo.
    """
    cfg = cfg or KernelConfig()
    xs, ys = as_samples(x, pooling), as_samples(y, pooling)
    if xs.shape[1] != ys.shape[1]:
        raise DimensionError("kernel_distance", xs.shape, ys.shape)
    n, m = xs.shape[0], ys.shape[0]
    if n < 2 or m < 2:
        raise InsufficientDataError(f"kernel_distance necesita al menos 2 muestras por lado ({n}, {m})")

    gamma = 0.0
    if cfg.kind == "rbf":
        gamma = cfg.gamma if cfg.gamma is not None else median_heuristic_gamma(xs, ys, cfg.subsample_seed)
        if not gamma > 0:
            raise NumericError(f"ancho de banda degenerado γ={gamma}")
    scale = cfg.scale if cfg.scale is not None else 1.0 / xs.shape[1]

    kxx = (_gram_sum(xs, xs, cfg, gamma, scale) - _kernel_diag(xs, cfg, scale).sum()) / (n * (n - 1))
    kyy = (_gram_sum(ys, ys, cfg, gamma, scale) - _kernel_diag(ys, cfg, scale).sum()) / (m * (m - 1))
    kxy = _gram_sum(xs, ys, cfg, gamma, scale) / (n * m)
    return float(kxx + kyy - 2.0 * kxy)


# ---- Coseno pareado ----

@dataclass
class PairedCosine:
    value: float
    zero_rows: int


def cosine_similarity_paired(x: ArrayLike, y: ArrayLike, pooling: str = "mean") -> PairedCosine:
    """Media por fila de x·y/(‖x‖‖y‖); los vectores nulos aportan 0"""
    xs, ys = as_samples(x, pooling), as_samples(y, pooling)
    if xs.shape != ys.shape:
        raise DimensionError("cosine_similarity_paired", xs.shape, ys.shape)
    norms = np.linalg.norm(xs, axis=1) * np.linalg.norm(ys, axis=1)
    zero = norms == 0
    dots = np.einsum("ij,ij->i", xs, ys)
    cos = np.divide(dots, norms, out=np.zeros_like(dots), where=~zero)
    zero_rows = int(zero.sum())
    if zero_rows:
        logger.warning(f"coseno: {zero_rows} filas con vector nulo contadas como 0")
    return PairedCosine(value=float(np.clip(cos.mean(), -1.0, 1.0)), zero_rows=zero_rows)


# ---- MI 1D gaussiana ----

@dataclass
class Mi1dResult:
    per_dim: np.ndarray
    total: float
    zero_variance: List[int] = field(default_factory=list)


def mi_1d_gauss(x: ArrayLike, y: ArrayLike, pooling: str = "mean") -> Mi1dResult:
    """Por dimensión emparejada: I = -½·ln(1-ρ²) con ρ de Pearson; total = suma"""
    xs, ys = as_samples(x, pooling), as_samples(y, pooling)
    if xs.shape != ys.shape:
        raise DimensionError("mi_1d_gauss", xs.shape, ys.shape)
    if xs.shape[0] < 2:
        raise InsufficientDataError("mi_1d_gauss necesita N ≥ 2")
    xc = xs - xs.mean(axis=0)
    yc = ys - ys.mean(axis=0)
    sx = np.sqrt((xc * xc).sum(axis=0))
    sy = np.sqrt((yc * yc).sum(axis=0))
    degenerate = (sx == 0) | (sy == 0)
    rho = np.divide((xc * yc).sum(axis=0), sx * sy, out=np.zeros(xs.shape[1]), where=~degenerate)
    rho = np.clip(rho, -RHO_CLAMP, RHO_CLAMP)
    per_dim = -0.5 * np.log1p(-rho * rho)
    per_dim = np.where(degenerate, 0.0, np.maximum(per_dim, 0.0))
    flagged = [int(i) for i in np.flatnonzero(degenerate)]
    if flagged:
        logger.warning(f"mi_1d_gauss: dimensiones con varianza nula {flagged} reportadas como 0")
    return Mi1dResult(per_dim=per_dim, total=float(per_dim.sum()), zero_variance=flagged)


def gaussian_fd_closed_form(mu_a: np.ndarray, var_a: np.ndarray, mu_b: np.ndarray, var_b: np.ndarray) -> float:
    """FD entre gaussianas de covarianza diagonal: ‖Δμ‖² + Σ(√λa-√λb)²"""
    diff = np.asarray(mu_a) - np.asarray(mu_b)
    return float(diff @ diff + np.sum((np.sqrt(var_a) - np.sqrt(var_b)) ** 2))
