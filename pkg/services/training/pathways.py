"""
Evaluación de las dos vías: features adaptadas (encoder + neck) frente a las
features del experto
"""
import logging
import time
from typing import Any, Dict, List, Optional

from services.errors import UsageError
from services.featio.features import FeatureSet, check_paired
from services.metrics.distances import KernelConfig
from services.metrics.suite import METRICS, metric_suite
from services.mi import ESTIMATORS, run_estimator
from services.reporting import MetricEntry, MetricReport, build_report, config_hash, run_metric

logger = logging.getLogger(__name__)


def split_selection(names: List[str]):
    metrics = [n for n in names if n in METRICS]
    estimators = [n for n in names if n in ESTIMATORS]
    unknown = [n for n in names if n not in METRICS and n not in ESTIMATORS]
    return metrics, estimators, unknown


def evaluate_pathways(adapted: FeatureSet, expert: FeatureSet, selection: List[str],
                      experiment: str = "pathways", seeds: Optional[List[int]] = None,
                      pooling: str = "mean", estimator_options: Optional[Dict[str, Dict[str, Any]]] = None,
                      kernels: Optional[Dict[str, KernelConfig]] = None) -> MetricReport:
    """
    Ejecuta las métricas de distancia y los estimadores de MI seleccionados sobre
    (adaptadas, experto). Un fallo queda registrado en su entrada sin abortar el reporte.
    """
    started = time.perf_counter()
    seeds = list(seeds or [0])
    estimator_options = estimator_options or {}
    metrics, _, unknown = split_selection(selection)
    if unknown:
        raise UsageError(f"métricas desconocidas {unknown}; válidas: {sorted(METRICS) + sorted(ESTIMATORS)}",
                         {"unknown": unknown})
    check_paired(adapted, expert)

    kernels = kernels or {}
    per_seed: Dict[int, List[MetricEntry]] = {}
    for seed in seeds:
        seeded = {kind: kernels.get(kind, KernelConfig(kind=kind)).model_copy(update={"subsample_seed": seed})
                  for kind in ("rbf", "poly")}
        entries = []
        for name in selection:
            if name in metrics:
                def _distance(name=name, seeded=seeded):
                    return metric_suite(adapted, expert, [name], pooling, seeded)[name]
                entries.append(run_metric(name, _distance))
            else:
                def _estimate(name=name, seed=seed):
                    return run_estimator(name, adapted, expert, estimator_options.get(name), seed, pooling)
                entries.append(run_metric(name, _estimate))
        per_seed[seed] = entries

    digest = config_hash({"selection": selection, "pooling": pooling, "estimators": estimator_options,
                          "kernels": {k: v.model_dump() for k, v in kernels.items()},
                          "adapted": adapted.source, "expert": expert.source})
    report = build_report(experiment, seeds, per_seed, digest, started)
    failed = [m.name for m in report.metrics if m.status == "failed"]
    if failed:
        logger.warning(f"reporte '{experiment}': métricas fallidas {failed}")
    return report
