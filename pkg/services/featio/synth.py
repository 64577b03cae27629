"""
Generadores sintéticos con estadísticas conocidas analíticamente:
pares gaussianos con MI cerrada y pipelines encoder/experto/tarea con
solapamiento de subespacios controlado.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator

from services.errors import SpecError
from services.featio.features import FeatureSet

logger = logging.getLogger(__name__)


class SynthSpec(BaseModel):
    # pipeline de tareas
    latent_dim: int = Field(8, ge=1)
    tokens: int = Field(4, ge=1)
    encoder_dim: int = Field(16, ge=1)
    expert_dim: int = Field(8, ge=1)
    rank1: int = Field(4, ge=1)
    rank2: int = Field(4, ge=1)
    overlap: float = Field(0.0, ge=0.0, le=1.0)
    noise: float = Field(0.0, ge=0.0)
    encoder_gain: float = Field(0.5, gt=0.0)
    token_view: Optional[int] = Field(None, ge=1)
    specialized: bool = False
    # par gaussiano
    dx: int = Field(1, ge=1)
    dy: int = Field(1, ge=1)
    rho: Optional[float] = Field(None, gt=-1.0, lt=1.0)
    target_mi: Optional[float] = Field(None, ge=0.0)
    covariance: Optional[List[List[float]]] = None
    seed: int = 0

    @field_validator("covariance")
    @classmethod
    def _symmetric(cls, value):
        if value is None:
            return value
        arr = np.asarray(value, dtype=float)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValueError("covariance debe ser cuadrada")
        if not np.allclose(arr, arr.T, atol=1e-12):
            raise ValueError("covariance debe ser simétrica")
        return value

    @model_validator(mode="after")
    def _covariance_size(self):
        if self.covariance is not None and len(self.covariance) != self.dx + self.dy:
            raise ValueError(f"covariance debe ser {self.dx + self.dy}×{self.dx + self.dy}")
        return self


def correlation_for_mi(mi: float, pairs: int) -> float:
    """ρ por par de coordenadas tal que -pairs/2·ln(1-ρ²) = mi"""
    return math.sqrt(1.0 - math.exp(-2.0 * mi / pairs))


def gaussian_covariance(spec: SynthSpec) -> np.ndarray:
    if spec.covariance is not None:
        return np.asarray(spec.covariance, dtype=np.float64)
    pairs = min(spec.dx, spec.dy)
    if spec.rho is not None:
        rho = spec.rho
    elif spec.target_mi is not None:
        rho = correlation_for_mi(spec.target_mi, pairs)
    else:
        rho = 0.0
    d = spec.dx + spec.dy
    sigma = np.eye(d)
    for i in range(pairs):
        sigma[i, spec.dx + i] = rho
        sigma[spec.dx + i, i] = rho
    return sigma


def gaussian_mi(sigma: np.ndarray, dx: int) -> float:
    """½·ln(det Σ_XX · det Σ_YY / det Σ) en nats"""
    _, logdet = np.linalg.slogdet(sigma)
    _, logdet_x = np.linalg.slogdet(sigma[:dx, :dx])
    _, logdet_y = np.linalg.slogdet(sigma[dx:, dx:])
    return max(0.0, 0.5 * (logdet_x + logdet_y - logdet))


def _cholesky(sigma: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        raise SpecError("Σ no es definida positiva (falló Cholesky)")


def synth_gaussian_pair(spec: SynthSpec, n: int) -> Tuple[FeatureSet, FeatureSet, float]:
    """N muestras de N(0, Σ) divididas en bloques X e Y, más la MI verdadera"""
    sigma = gaussian_covariance(spec)
    chol = _cholesky(sigma)
    rng = np.random.default_rng(spec.seed)
    samples = rng.standard_normal((n, sigma.shape[0])) @ chol.T
    true_mi = gaussian_mi(sigma, spec.dx)
    source = f"synth:gaussian:seed={spec.seed}"
    x = FeatureSet(samples[:, :spec.dx], role="adapted", name="x", source=source)
    y = FeatureSet(samples[:, spec.dx:], role="expert", name="y", source=source)
    logger.debug(f"par gaussiano dx={spec.dx} dy={spec.dy} N={n}: MI verdadera {true_mi:.4f} nats")
    return x, y, true_mi


@dataclass
class SynthPipeline:
    features: Dict[str, FeatureSet]
    b1: np.ndarray
    b2: np.ndarray
    basis1: np.ndarray
    basis2: np.ndarray
    shared_rank: int
    truth: Dict[str, float] = field(default_factory=dict)


def _orthonormal(rng: np.random.Generator, m: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((m, m)))
    return q * np.sign(np.diag(r))


def _token_maps(rng: np.random.Generator, spec: SynthSpec) -> np.ndarray:
    m = spec.latent_dim
    maps = rng.standard_normal((spec.tokens, spec.encoder_dim, m)) * (spec.encoder_gain / math.sqrt(m))
    if spec.token_view is not None and spec.token_view < m:
        # cada token ve una ventana rotativa de coordenadas del latente
        for t in range(spec.tokens):
            visible = [(t * spec.token_view + j) % m for j in range(spec.token_view)]
            hidden = [j for j in range(m) if j not in visible]
            maps[t][:, hidden] = 0.0
    return maps


def _encode(maps: np.ndarray, z: np.ndarray) -> np.ndarray:
    return np.tanh(np.einsum("tdm,nm->ntd", maps, z))


def synth_task_pipeline(spec: SynthSpec, n: int) -> SynthPipeline:
    """
    Z ~ N(0, I_m); E = tanh(A_t·z) por token; F_i = B_i·z + σ·ruido.
    B₂ comparte ⌈ω·rank₂⌉ vectores base con B₁ y el resto es ortogonal.
    """
    m = spec.latent_dim
    shared = math.ceil(round(spec.overlap * spec.rank2, 9))
    fresh = spec.rank2 - shared
    if spec.rank1 > m or spec.rank2 > m:
        raise SpecError(f"rangos ({spec.rank1}, {spec.rank2}) exceden latent_dim={m}")
    if spec.rank1 > spec.expert_dim or spec.rank2 > spec.expert_dim:
        raise SpecError(f"rangos ({spec.rank1}, {spec.rank2}) exceden expert_dim={spec.expert_dim}")
    if shared > spec.rank1 or spec.rank1 + fresh > m:
        raise SpecError(
            f"dimensiones infactibles: latent_dim={m} < rank1 + rank2·(1-ω) = {spec.rank1 + fresh}"
        )

    rng = np.random.default_rng(spec.seed)
    q = _orthonormal(rng, m)
    basis1 = q[:, :spec.rank1]
    basis2 = np.concatenate([q[:, :shared], q[:, spec.rank1:spec.rank1 + fresh]], axis=1)
    mix1 = rng.standard_normal((spec.expert_dim, spec.rank1)) / math.sqrt(spec.rank1)
    mix2 = rng.standard_normal((spec.expert_dim, spec.rank2)) / math.sqrt(spec.rank2)
    b1 = mix1 @ basis1.T
    b2 = mix2 @ basis2.T
    maps = _token_maps(rng, spec)

    z = rng.standard_normal((n, m))
    encoder = _encode(maps, z)
    signal1 = z @ b1.T
    signal2 = z @ b2.T
    f1 = np.repeat(signal1[:, None, :], spec.tokens, axis=1)
    f2 = np.repeat(signal2[:, None, :], spec.tokens, axis=1)
    if spec.noise > 0:
        f1 = f1 + spec.noise * rng.standard_normal(f1.shape)
        f2 = f2 + spec.noise * rng.standard_normal(f2.shape)

    source = f"synth:pipeline:seed={spec.seed}"
    features = {
        "encoder": FeatureSet(encoder, role="encoder", name="encoder", source=source),
        "expert1": FeatureSet(f1, role="expert", name="expert1", source=source),
        "expert2": FeatureSet(f2, role="expert", name="expert2", source=source),
        "latent": FeatureSet(z, role="latent", name="latent", source=source),
    }
    if spec.specialized:
        projector = basis1 @ basis1.T
        features["encoder_specialized"] = FeatureSet(
            _encode(maps, z @ projector), role="encoder", name="encoder_specialized", source=source
        )
    truth = {
        "overlap": spec.overlap,
        "shared_rank": float(shared),
        "subspace_overlap": shared / spec.rank2,
        "rank1": float(spec.rank1),
        "rank2": float(spec.rank2),
        "noise": spec.noise,
    }
    logger.debug(f"pipeline sintético N={n} m={m} ω={spec.overlap}: {shared} vectores compartidos")
    return SynthPipeline(features=features, b1=b1, b2=b2, basis1=basis1, basis2=basis2,
                         shared_rank=shared, truth=truth)
