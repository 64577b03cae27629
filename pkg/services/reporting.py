"""
Reportes de métricas y tablas de curvas para los barridos
"""
import csv
import hashlib
import io
import json
import logging
import math
import time
from typing import Any, Callable, Dict, Iterable, List, Optional

import numpy as np
from pydantic import BaseModel, Field, model_validator

from services.config import TOOLKIT_VERSION, runtime_environment
from services.errors import FeatprobeError, UsageError

logger = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = "1"
CURVE_HEADER = ["sweep_value", "metric", "mean", "std"]
NORMALIZE_PADDING = 0.10


def canonical_json(payload: Any) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), default=_jsonable)


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, BaseModel):
        return value.model_dump()
    raise TypeError(f"no serializable: {type(value).__name__}")


def config_hash(*configs: Any) -> str:
    """SHA-256 del JSON canónico de las configuraciones"""
    payload = [c.model_dump() if isinstance(c, BaseModel) else c for c in configs]
    return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()


# ---- Reporte de métricas ----

class Aggregate(BaseModel):
    mean: float
    std: Optional[float] = None
    n: int


class MetricEntry(BaseModel):
    name: str
    value: Optional[float] = None
    units: str = ""
    status: str = Field("ok", pattern="^(ok|failed)$")
    diagnostics: Dict[str, Any] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _failed_has_diagnostics(self):
        if self.status == "failed" and not self.diagnostics:
            raise ValueError(f"la métrica fallida '{self.name}' debe llevar diagnósticos")
        if self.status == "ok" and (self.value is None or not math.isfinite(self.value)):
            raise ValueError(f"la métrica '{self.name}' con status ok necesita un valor finito")
        return self


class MetricReport(BaseModel):
    schema_version: str = REPORT_SCHEMA_VERSION
    experiment: str
    seeds: List[int]
    metrics: List[MetricEntry]
    aggregate: Optional[Dict[str, Aggregate]] = None
    config_hash: str
    toolkit_version: str = TOOLKIT_VERSION
    environment: Dict[str, str] = Field(default_factory=runtime_environment)
    wall_clock: float = 0.0

    @model_validator(mode="after")
    def _unique_names(self):
        names = [m.name for m in self.metrics]
        if len(names) != len(set(names)):
            raise ValueError(f"métricas repetidas en el reporte: {names}")
        return self

    def entry(self, name: str) -> MetricEntry:
        for m in self.metrics:
            if m.name == name:
                return m
        raise KeyError(name)

    def all_failed(self) -> bool:
        return bool(self.metrics) and all(m.status == "failed" for m in self.metrics)

    def digest(self) -> str:
        """Hash del reporte sin el tiempo de reloj"""
        return hashlib.sha256(canonical_json(self.model_dump(exclude={"wall_clock"})).encode()).hexdigest()


def report_schema() -> Dict[str, Any]:
    return MetricReport.model_json_schema()


def failure_diagnostics(error: Exception) -> Dict[str, Any]:
    diagnostics: Dict[str, Any] = {"error": type(error).__name__, "message": str(error)}
    if isinstance(error, FeatprobeError):
        diagnostics.update(error.diagnostics)
        diagnostics["exit_code"] = error.exit_code
    return diagnostics


def run_metric(name: str, fn: Callable[[], Any]) -> MetricEntry:
    """
    Ejecuta una métrica y la convierte en una entrada de reporte.
    `fn` devuelve un objeto con `value`, `units` y `diagnostics`.
    Los errores del toolkit quedan registrados como status=failed.
    """
    try:
        result = fn()
    except FeatprobeError as e:
        logger.warning(f"métrica '{name}' falló: {e.message}")
        return MetricEntry(name=name, status="failed", diagnostics=failure_diagnostics(e))
    return MetricEntry(name=name, value=float(result.value), units=result.units,
                       diagnostics=dict(result.diagnostics))


def aggregate_values(values: Iterable[float]) -> Aggregate:
    arr = np.asarray(list(values), dtype=np.float64)
    std = float(arr.std(ddof=1)) if arr.size >= 2 else None
    return Aggregate(mean=float(arr.mean()), std=std, n=int(arr.size))


def merge_seed_entries(name: str, per_seed: Dict[int, MetricEntry]) -> MetricEntry:
    """Una entrada por métrica a partir de varias semillas; falla si alguna semilla falló"""
    failed = {seed: e for seed, e in per_seed.items() if e.status == "failed"}
    ok = {seed: e for seed, e in per_seed.items() if e.status == "ok"}
    units = next((e.units for e in per_seed.values() if e.units), "")
    if failed:
        first = failed[min(failed)].diagnostics
        diagnostics = {
            "failed_seeds": sorted(failed),
            "message": first.get("message", ""),
            "errors": {str(seed): e.diagnostics for seed, e in sorted(failed.items())},
            "values": {str(seed): e.value for seed, e in sorted(ok.items())},
        }
        codes = {e.diagnostics.get("exit_code") for e in failed.values()}
        if len(codes) == 1:
            diagnostics["exit_code"] = codes.pop()
        return MetricEntry(name=name, units=units, status="failed", diagnostics=diagnostics)
    agg = aggregate_values(e.value for e in ok.values())
    return MetricEntry(name=name, value=agg.mean, units=units, diagnostics={
        "values": {str(seed): e.value for seed, e in sorted(ok.items())},
        "per_seed": {str(seed): e.diagnostics for seed, e in sorted(ok.items())},
    })


def build_report(experiment: str, seeds: List[int], per_seed: Dict[int, List[MetricEntry]],
                 config_digest: str, started: float) -> MetricReport:
    if len(seeds) == 1:
        entries = per_seed[seeds[0]]
        aggregate = None
    else:
        names = [e.name for e in per_seed[seeds[0]]]
        entries = []
        aggregate = {}
        for name in names:
            by_seed = {seed: next(e for e in per_seed[seed] if e.name == name) for seed in seeds}
            entries.append(merge_seed_entries(name, by_seed))
            ok_values = [e.value for e in by_seed.values() if e.status == "ok"]
            if ok_values:
                aggregate[name] = aggregate_values(ok_values)
    return MetricReport(
        experiment=experiment,
        seeds=list(seeds),
        metrics=entries,
        aggregate=aggregate,
        config_hash=config_digest,
        wall_clock=round(time.perf_counter() - started, 3),
    )


# ---- Tablas de curvas ----

class CurveRow(BaseModel):
    sweep_value: float
    metric: str
    mean: float
    std: Optional[float] = None


class CurveTable(BaseModel):
    sweep_variable: str
    rows: List[CurveRow] = Field(default_factory=list)

    @classmethod
    def from_samples(cls, sweep_variable: str, samples: Dict[float, Dict[str, List[float]]]) -> "CurveTable":
        """samples[valor][métrica] = valores por semilla; filas ordenadas por valor de barrido"""
        rows = []
        for value in sorted(samples):
            for metric in sorted(samples[value]):
                values = samples[value][metric]
                if not values:
                    continue
                agg = aggregate_values(values)
                rows.append(CurveRow(sweep_value=value, metric=metric, mean=agg.mean, std=agg.std))
        return cls(sweep_variable=sweep_variable, rows=rows)

    def metrics(self) -> List[str]:
        return sorted({r.metric for r in self.rows})

    def series(self, metric: str) -> List[CurveRow]:
        return [r for r in self.rows if r.metric == metric]

    def normalized(self, padding: float = NORMALIZE_PADDING) -> "CurveTable":
        """Escala cada métrica a su rango observado con relleno en ambos extremos"""
        rows = []
        for metric in self.metrics():
            series = self.series(metric)
            lo = min(r.mean for r in series)
            hi = max(r.mean for r in series)
            span = hi - lo
            if span <= 0:
                span = abs(hi) or 1.0
            lo -= padding * span
            width = span * (1.0 + 2.0 * padding)
            for r in series:
                rows.append(CurveRow(
                    sweep_value=r.sweep_value, metric=metric, mean=(r.mean - lo) / width,
                    std=None if r.std is None else r.std / width,
                ))
        rows.sort(key=lambda r: (r.sweep_value, r.metric))
        return CurveTable(sweep_variable=self.sweep_variable, rows=rows)

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(CURVE_HEADER)
        for r in self.rows:
            writer.writerow([_fmt(r.sweep_value), r.metric, repr(float(r.mean)),
                             "" if r.std is None else repr(float(r.std))])
        return buffer.getvalue()


def _fmt(value: float) -> str:
    return str(int(value)) if float(value).is_integer() else repr(float(value))


def parse_curve_csv(text: str) -> CurveTable:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header != CURVE_HEADER:
        raise UsageError(f"cabecera CSV inválida {header}; esperada {CURVE_HEADER}")
    rows = [CurveRow(sweep_value=float(v), metric=m, mean=float(mu), std=float(s) if s else None)
            for v, m, mu, s in reader]
    return CurveTable(sweep_variable="", rows=rows)
