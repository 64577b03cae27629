"""
Estimador de Kraskov-Stögbauer-Grassberger (variante 1, norma del máximo)
"""
import logging

import numpy as np
from scipy.special import digamma
from sklearn.neighbors import KDTree

from services.errors import DimensionError, UsageError
from services.metrics.distances import ArrayLike, as_samples

logger = logging.getLogger(__name__)

MAX_JOINT_DIM = 16
MIN_SAMPLES = 100


def _marginal_counts(points: np.ndarray, radius: np.ndarray) -> np.ndarray:
    """Vecinos a distancia estrictamente menor que `radius`, sin contar el propio punto"""
    tree = KDTree(points, metric="chebyshev")
    strict = np.nextafter(radius, 0.0)
    return tree.query_radius(points, r=strict, count_only=True) - 1


def ksg_estimate(x: ArrayLike, y: ArrayLike, neighbors: int = 5, pooling: str = "mean",
                 standardize: bool = True) -> float:
    """
    I = ψ(k) + ψ(N) - ⟨ψ(n_x+1) + ψ(n_y+1)⟩ en nats.
    Solo para dimensión conjunta ≤ 16 y N ≥ 100.
    """
    xs, ys = as_samples(x, pooling), as_samples(y, pooling)
    if xs.shape[0] != ys.shape[0]:
        raise DimensionError("ksg_estimate", xs.shape, ys.shape)
    n = xs.shape[0]
    joint_dim = xs.shape[1] + ys.shape[1]
    if joint_dim > MAX_JOINT_DIM:
        raise UsageError(
            f"KSG limitado a dimensión conjunta ≤ {MAX_JOINT_DIM} (recibido {joint_dim}); use mine o lmi",
            {"joint_dim": joint_dim, "limit": MAX_JOINT_DIM},
        )
    if n < MIN_SAMPLES:
        raise UsageError(f"KSG necesita N ≥ {MIN_SAMPLES} (N={n})", {"n": n})
    if not 1 <= neighbors < n:
        raise UsageError(f"neighbors debe estar en [1, N) (recibido {neighbors})")

    if standardize:
        xs = (xs - xs.mean(axis=0)) / np.where(xs.std(axis=0) > 0, xs.std(axis=0), 1.0)
        ys = (ys - ys.mean(axis=0)) / np.where(ys.std(axis=0) > 0, ys.std(axis=0), 1.0)

    joint = np.concatenate([xs, ys], axis=1)
    # k+1 vecinos porque el primero es el propio punto; empates resueltos por índice
    dist, _ = KDTree(joint, metric="chebyshev").query(joint, k=neighbors + 1)
    radius = dist[:, neighbors]
    n_x = _marginal_counts(xs, radius)
    n_y = _marginal_counts(ys, radius)
    mi = digamma(neighbors) + digamma(n) - np.mean(digamma(n_x + 1) + digamma(n_y + 1))
    logger.debug(f"KSG k={neighbors} N={n} dim={joint_dim}: {mi:.4f} nats")
    return float(mi)
