"""
Manifiestos JSON que enlazan roles con archivos de features
"""
import json
import logging
from pathlib import Path
from typing import Dict, List, Optional, Union

from pydantic import BaseModel, Field, ValidationError

from services.errors import FeatureIOError, ManifestError
from services.featio.features import ROLES, FeatureSet
from services.featio.npy import load_feature_file, read_feature_header

logger = logging.getLogger(__name__)


class ManifestEntry(BaseModel):
    role: str
    path: str
    shape: List[int] = Field(default_factory=list)


class Manifest(BaseModel):
    experiment: str
    seed: int = 0
    entries: List[ManifestEntry] = Field(default_factory=list)
    base_dir: Optional[str] = Field(default=None, exclude=True)

    def roles(self) -> List[str]:
        return [e.role for e in self.entries]

    def entry(self, role: str) -> ManifestEntry:
        for e in self.entries:
            if e.role == role:
                return e
        raise ManifestError(f"el manifiesto '{self.experiment}' no tiene el rol '{role}' (roles: {self.roles()})",
                            {"role": role, "roles": self.roles()})

    def resolve(self, entry: ManifestEntry) -> Path:
        p = Path(entry.path)
        if not p.is_absolute() and self.base_dir:
            p = Path(self.base_dir) / p
        return p

    def load_role(self, role: str) -> FeatureSet:
        entry = self.entry(role)
        return load_feature_file(self.resolve(entry), role=feature_role(role), name=role)


def feature_role(manifest_role: str) -> str:
    """Rol del FeatureSet a partir de la etiqueta del manifiesto (p. ej. 'expert1' -> 'expert')"""
    for role in ROLES:
        if manifest_role.startswith(role):
            return role
    return "latent"


def load_manifest(path: Union[str, Path]) -> Manifest:
    """Carga y valida un manifiesto completo: rutas resolubles y formas coherentes"""
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise ManifestError(f"no se pudo leer el manifiesto {path}: {e}", {"path": str(path)})
    except json.JSONDecodeError as e:
        raise ManifestError(f"manifiesto {path} no es JSON válido: {e}", {"path": str(path)})
    try:
        manifest = Manifest(**payload)
    except (ValidationError, TypeError) as e:
        raise ManifestError(f"manifiesto {path} inválido: {e}", {"path": str(path)})
    manifest.base_dir = str(path.parent)

    for entry in manifest.entries:
        target = manifest.resolve(entry)
        if not target.exists():
            raise ManifestError(f"rol '{entry.role}': ruta no encontrada {target}",
                                {"role": entry.role, "path": str(target)})
        try:
            _, shape = read_feature_header(target)
        except FeatureIOError as e:
            raise ManifestError(f"rol '{entry.role}': {e.message}", {"role": entry.role, **e.diagnostics})
        if entry.shape and list(shape) != list(entry.shape):
            raise ManifestError(
                f"rol '{entry.role}': forma declarada {entry.shape} ≠ cabecera {list(shape)}",
                {"role": entry.role, "declared": entry.shape, "header": list(shape)},
            )
    return manifest


def save_manifest(manifest: Manifest, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest.model_dump(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def load_roles(manifest: Manifest, roles: List[str]) -> Dict[str, FeatureSet]:
    return {role: manifest.load_role(role) for role in roles}
