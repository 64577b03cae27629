"""
Registro de métricas de distancia por nombre, usado por el reporte de vías
y por el comando `metrics`
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional

from services.errors import UsageError
from services.metrics.distances import (
    ArrayLike,
    KernelConfig,
    as_samples,
    cosine_similarity_paired,
    frechet_distance,
    kernel_distance,
    mi_1d_gauss,
    summarize,
)

logger = logging.getLogger(__name__)


@dataclass
class MetricValue:
    value: float
    units: str
    diagnostics: Dict[str, Any] = field(default_factory=dict)


def _fd(x, y, pooling, kernels):
    a, b = summarize(x, pooling), summarize(y, pooling)
    return MetricValue(frechet_distance(a, b), "feature²", {"n_x": a.n, "n_y": b.n})


def _kd(kind):
    def run(x, y, pooling, kernels):
        cfg = kernels.get(kind) or KernelConfig(kind=kind)
        return MetricValue(kernel_distance(x, y, cfg, pooling), "mmd²", {"kernel": cfg.model_dump()})
    return run


def _cos(x, y, pooling, kernels):
    result = cosine_similarity_paired(x, y, pooling)
    return MetricValue(result.value, "cosine", {"zero_rows": result.zero_rows})


def _mi1d(x, y, pooling, kernels):
    result = mi_1d_gauss(x, y, pooling)
    return MetricValue(result.total, "nats", {
        "per_dim": [float(v) for v in result.per_dim],
        "zero_variance": result.zero_variance,
    })


METRICS: Dict[str, Callable[..., MetricValue]] = {
    "fd": _fd,
    "kd_rbf": _kd("rbf"),
    "kd_poly": _kd("poly"),
    "cos": _cos,
    "mi1d": _mi1d,
}


def parse_metric_names(text: str) -> List[str]:
    names = [n.strip() for n in text.split(",") if n.strip()]
    unknown = [n for n in names if n not in METRICS]
    if unknown or not names:
        raise UsageError(f"métricas desconocidas {unknown}; válidas: {sorted(METRICS)}",
                         {"unknown": unknown, "valid": sorted(METRICS)})
    return names


def metric_suite(x: ArrayLike, y: ArrayLike, names: List[str], pooling: str = "mean",
                 kernels: Optional[Dict[str, KernelConfig]] = None) -> Dict[str, MetricValue]:
    """Ejecuta las métricas nombradas; los errores se propagan al llamador"""
    kernels = kernels or {}
    results = {}
    for name in names:
        if name not in METRICS:
            raise UsageError(f"métrica desconocida '{name}'; válidas: {sorted(METRICS)}")
        results[name] = METRICS[name](x, y, pooling, kernels)
        logger.debug(f"{name}: {results[name].value:.6g} {results[name].units}")
    return results


__all__ = ["METRICS", "MetricValue", "metric_suite", "parse_metric_names", "as_samples"]
