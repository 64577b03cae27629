"""
Jerarquía de errores de featprobe.
Cada error lleva el código de salida que usa la CLI.
"""
from typing import Any, Dict, List, Optional


class FeatprobeError(Exception):
    """Error base con código de salida"""

    exit_code = 1

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.diagnostics = diagnostics or {}


class ConfigError(FeatprobeError):
    exit_code = 2


class SpecError(ConfigError):
    """SynthSpec inválida (Σ no definida positiva, dimensiones infactibles)"""


class UsageError(FeatprobeError):
    exit_code = 2


class DimensionError(UsageError, ValueError):
    """Formas incompatibles; el mensaje incluye ambas formas"""

    def __init__(self, op: str, *shapes):
        shapes_txt = " vs ".join(str(tuple(s)) for s in shapes)
        super().__init__(f"{op}: formas incompatibles {shapes_txt}", {"op": op, "shapes": [list(s) for s in shapes]})
        self.op = op


class FeatureIOError(FeatprobeError):
    exit_code = 3


class FormatError(FeatureIOError):
    """Cabecera NPY inválida; `field` nombra el campo culpable"""

    def __init__(self, message: str, field: str, path: Optional[str] = None):
        super().__init__(message, {"field": field, "path": path})
        self.field = field
        self.path = path


class DataError(FeatureIOError):
    """Valores no finitos; `index` es el primer índice culpable"""

    def __init__(self, message: str, index: Optional[tuple] = None, path: Optional[str] = None):
        super().__init__(message, {"index": list(index) if index is not None else None, "path": path})
        self.index = index
        self.path = path


class ManifestError(FeatureIOError):
    pass


class NumericError(FeatprobeError):
    exit_code = 4


class InsufficientDataError(NumericError):
    pass


class EstimationError(NumericError):
    """Divergencia de un estimador; adjunta la curva de entrenamiento"""

    def __init__(self, message: str, curve: Optional[List[float]] = None):
        super().__init__(message, {"curve": list(curve or [])})
        self.curve = list(curve or [])


class TrainingAbort(FeatprobeError):
    """Pérdida NaN durante el entrenamiento; adjunta los últimos desgloses"""

    exit_code = 5

    def __init__(self, message: str, last_breakdowns: Optional[List[Dict[str, Any]]] = None):
        super().__init__(message, {"last_breakdowns": list(last_breakdowns or [])})
        self.last_breakdowns = list(last_breakdowns or [])


class InvariantViolation(FeatprobeError):
    exit_code = 5
