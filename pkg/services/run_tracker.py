"""
Registro de corridas: RunRecord JSON y checkpoint del neck bajo
runs/<experimento>/<semilla>/, escritos de forma atómica
"""
import json
import logging
import os
import tempfile
from pathlib import Path
from typing import List, Optional, Union

from services.config import RUNS_DIR
from services.errors import FeatureIOError
from services.neck import NeckParams, save_checkpoint
from services.training.trainer import RunRecord

logger = logging.getLogger(__name__)

RECORD_NAME = "run.json"
CHECKPOINT_NAME = "neck.ckpt"


def write_atomic(path: Union[str, Path], text: str) -> Path:
    """Escribe en un temporal del mismo directorio y lo renombra"""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(text)
        os.replace(tmp, path)
    except OSError as e:
        raise FeatureIOError(f"no se pudo escribir {path}: {e}", {"path": str(path)})
    return path


class RunTracker:
    """Persiste los registros de entrenamiento de un directorio de corridas"""

    def __init__(self, runs_dir: Union[str, Path, None] = None):
        self.runs_dir = Path(runs_dir or RUNS_DIR)

    def run_dir(self, experiment: str, seed: int, tag: Optional[str] = None) -> Path:
        base = self.runs_dir / experiment
        if tag:
            base = base / _slug(tag)
        return base / str(seed)

    def record_run(self, record: RunRecord, params: NeckParams, subdir: Optional[str] = None) -> Path:
        """Guarda checkpoint y registro; las corridas cruzadas van en un subdirectorio propio"""
        if subdir is None and "→" in record.tag:
            subdir = record.tag
        target = self.run_dir(record.experiment, record.seed, subdir)
        checkpoint = target / CHECKPOINT_NAME
        tmp = target / f".{CHECKPOINT_NAME}.tmp"
        save_checkpoint(params, tmp, overwrite=True)
        try:
            os.replace(tmp, checkpoint)
        except OSError as e:
            raise FeatureIOError(f"no se pudo mover el checkpoint a {checkpoint}: {e}", {"path": str(checkpoint)})
        record.checkpoint = str(checkpoint)
        path = write_atomic(target / RECORD_NAME, record.model_dump_json(indent=2) + "\n")
        logger.info(f"corrida '{record.tag}' semilla {record.seed} registrada en {path}")
        return path

    def load_record(self, path: Union[str, Path]) -> RunRecord:
        path = Path(path)
        if path.is_dir():
            path = path / RECORD_NAME
        try:
            payload = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise FeatureIOError(f"no se pudo leer el registro {path}: {e}", {"path": str(path)})
        return RunRecord(**payload)

    def list_records(self, experiment: str) -> List[RunRecord]:
        base = self.runs_dir / experiment
        return [self.load_record(p) for p in sorted(base.rglob(RECORD_NAME))]


def _slug(tag: str) -> str:
    return tag.replace(" → ", "__").replace(" ", "_").replace("/", "_")


def get_run_tracker(runs_dir: Union[str, Path, None] = None) -> RunTracker:
    return RunTracker(runs_dir)
