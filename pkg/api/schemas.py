"""
Esquemas de los archivos de experimento (TOML o JSON con la misma estructura)
"""
import json
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from pydantic import BaseModel, Field, ValidationError

from services.errors import ConfigError
from services.neck import NeckConfig
from services.training import TaskSpec, TrainConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


# ---- Datos ----
class DataSection(BaseModel):
    manifest: str
    encoder_role: str = "encoder"
    expert_role: str = "expert1"
    targets_role: Optional[str] = None


# ---- Neck ----
class NeckSection(BaseModel):
    """NeckConfig con d_in/d_out opcionales: se infieren de las features"""
    layers: int = Field(2, ge=1)
    heads: Optional[int] = Field(None, ge=1)
    d_model: int = Field(64, ge=2)
    d_in: Optional[int] = Field(None, ge=1)
    d_out: Optional[int] = Field(None, ge=1)
    tokens: Optional[int] = Field(None, ge=1)
    mlp_expansion: int = Field(4, ge=1)
    init_std: float = Field(0.02, gt=0)

    def resolve(self, d_in: int, d_out: int, tokens: int) -> NeckConfig:
        return NeckConfig(
            layers=self.layers, heads=self.heads, d_model=self.d_model,
            d_in=self.d_in or d_in, d_out=self.d_out or d_out, tokens=self.tokens or tokens,
            mlp_expansion=self.mlp_expansion, init_std=self.init_std,
        )


# ---- Experimentos ----
class TrainExperiment(BaseModel):
    experiment: str
    data: DataSection
    neck: NeckSection = Field(default_factory=NeckSection)
    train: TrainConfig = Field(default_factory=TrainConfig)
    task: TaskSpec = Field(default_factory=TaskSpec)


class CrossExperiment(TrainExperiment):
    neck1_checkpoint: str
    upstream_task: str = "task1"
    direct_record: Optional[str] = None


class SweepSection(BaseModel):
    variable: str = Field("layers", pattern="^layers$")
    values: List[int] = Field(default_factory=lambda: [2, 4, 6])
    seeds: int = Field(3, ge=1)
    metrics: List[str] = Field(default_factory=lambda: ["heldout_task_loss", "train_task_loss"])


class SweepExperiment(TrainExperiment):
    sweep: SweepSection = Field(default_factory=SweepSection)


def read_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    """Lee TOML o JSON; las rutas relativas de datos se resuelven junto al archivo"""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise ConfigError(f"no se pudo leer la configuración {path}: {e}", {"path": str(path)})
    try:
        if path.suffix.lower() == ".json":
            payload = json.loads(raw.decode("utf-8"))
        else:
            payload = tomllib.loads(raw.decode("utf-8"))
    except (ValueError, UnicodeDecodeError) as e:
        raise ConfigError(f"configuración {path} ilegible: {e}", {"path": str(path)})

    base = path.parent
    data = payload.get("data")
    if isinstance(data, dict) and "manifest" in data:
        data["manifest"] = str(_relative_to(base, data["manifest"]))
    for key in ("neck1_checkpoint", "direct_record"):
        if payload.get(key):
            payload[key] = str(_relative_to(base, payload[key]))
    return payload


def _relative_to(base: Path, value: str) -> Path:
    p = Path(value)
    return p if p.is_absolute() else base / p


def load_experiment(path: Union[str, Path], model=TrainExperiment, overrides: Optional[Dict[str, Any]] = None):
    """Valida el archivo contra `model`; `overrides` usa claves 'sección.campo'"""
    payload = read_config_file(path)
    for dotted, value in (overrides or {}).items():
        if value is None:
            continue
        section, _, key = dotted.partition(".")
        if key:
            payload.setdefault(section, {})[key] = value
        else:
            payload[section] = value
    try:
        return model(**payload)
    except ValidationError as e:
        messages = [err["msg"] for err in e.errors()]
        raise ConfigError(f"configuración {path} inválida: {e}", {"path": str(path), "errors": messages})
