"""
Checkpoint binario del neck: magic, versión, cabecera JSON con la configuración
y carga útil f64 little-endian en el orden de la cabecera.
"""
import json
import logging
import struct
from pathlib import Path
from typing import Union

import numpy as np
from pydantic import ValidationError

from services.autodiff.engine import Tensor
from services.errors import FeatureIOError, FormatError
from services.neck.model import NeckConfig, NeckParams

logger = logging.getLogger(__name__)

MAGIC = b"\x93FPNECK"
FORMAT_VERSION = 1


def save_checkpoint(params: NeckParams, path: Union[str, Path], overwrite: bool = False) -> Path:
    path = Path(path)
    header = {
        "format_version": FORMAT_VERSION,
        "config": params.config.model_dump(),
        "tensors": [{"name": n, "shape": list(t.shape)} for n, t in params.tensors.items()],
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    payload = b"".join(np.ascontiguousarray(t.data, dtype="<f8").tobytes() for t in params.tensors.values())
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb" if overwrite else "xb") as f:
            f.write(MAGIC)
            f.write(struct.pack("<HI", FORMAT_VERSION, len(header_bytes)))
            f.write(header_bytes)
            f.write(payload)
    except FileExistsError:
        raise FeatureIOError(f"el checkpoint ya existe: {path}", {"path": str(path)})
    except OSError as e:
        raise FeatureIOError(f"no se pudo escribir el checkpoint {path}: {e}", {"path": str(path)})
    logger.debug(f"checkpoint guardado en {path} ({params.count()} parámetros)")
    return path


def load_checkpoint(path: Union[str, Path], requires_grad: bool = False) -> NeckParams:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise FeatureIOError(f"no se pudo leer el checkpoint {path}: {e}", {"path": str(path)})
    if not raw.startswith(MAGIC):
        raise FormatError(f"{path}: magic de checkpoint inválido", field="magic", path=str(path))
    offset = len(MAGIC)
    if len(raw) < offset + struct.calcsize("<HI"):
        raise FormatError(f"{path}: prefijo de checkpoint truncado", field="version", path=str(path))
    version, header_len = struct.unpack_from("<HI", raw, offset)
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: versión de checkpoint {version} no soportada", field="version", path=str(path))
    offset += struct.calcsize("<HI")
    if offset + header_len > len(raw):
        raise FormatError(f"{path}: cabecera truncada", field="header", path=str(path))
    try:
        header = json.loads(raw[offset:offset + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise FormatError(f"{path}: cabecera JSON ilegible", field="header", path=str(path))
    offset += header_len

    try:
        config = NeckConfig(**header["config"])
        entries = [(e["name"], tuple(e["shape"])) for e in header["tensors"]]
    except (KeyError, TypeError, ValidationError):
        raise FormatError(f"{path}: cabecera sin configuración o tensores válidos", field="header", path=str(path))
    tensors = {}
    for name, shape in entries:
        count = int(np.prod(shape)) if shape else 1
        nbytes = 8 * count
        if offset + nbytes > len(raw):
            raise FormatError(f"{path}: carga útil truncada en '{name}'", field="payload", path=str(path))
        data = np.frombuffer(raw, dtype="<f8", count=count, offset=offset).reshape(shape)
        tensors[name] = Tensor(data, requires_grad=requires_grad, name=name)
        offset += nbytes
    if offset != len(raw):
        raise FormatError(f"{path}: bytes sobrantes tras la carga útil", field="payload", path=str(path))
    return NeckParams(config=config, tensors=tensors)
