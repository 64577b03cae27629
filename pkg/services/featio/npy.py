"""
Lector/escritor del subconjunto NPY v1.0: descr '<f4' o '<f8', orden C,
forma (N, D) o (N, T, D), datos little-endian.
"""
import ast
import logging
import struct
from pathlib import Path
from typing import Tuple, Union

import numpy as np

from services.errors import FeatureIOError, FormatError
from services.featio.features import DTYPES, FeatureSet, check_finite

logger = logging.getLogger(__name__)

MAGIC = b"\x93NUMPY"
VERSION = (1, 0)
ALIGNMENT = 64
_DESCR_TO_DTYPE = {v: k for k, v in DTYPES.items()}

PathLike = Union[str, Path]


def _parse_header(raw: bytes, path: str) -> Tuple[str, Tuple[int, ...], int]:
    if len(raw) < 10 or raw[:6] != MAGIC:
        raise FormatError(f"{path}: magic inválido", field="magic", path=path)
    version = (raw[6], raw[7])
    if version != VERSION:
        raise FormatError(f"{path}: versión {version} no soportada (solo 1.0)", field="version", path=path)
    (header_len,) = struct.unpack_from("<H", raw, 8)
    start = 10
    try:
        header = ast.literal_eval(raw[start:start + header_len].decode("latin1"))
    except (ValueError, SyntaxError):
        raise FormatError(f"{path}: cabecera ilegible", field="header", path=path)
    if not isinstance(header, dict) or set(header) != {"descr", "fortran_order", "shape"}:
        raise FormatError(f"{path}: claves de cabecera inválidas", field="header", path=path)

    descr = header["descr"]
    if descr not in _DESCR_TO_DTYPE:
        raise FormatError(f"{path}: descr {descr!r} no soportado (válidos: '<f4', '<f8')", field="descr", path=path)
    if header["fortran_order"] is not False:
        raise FormatError(f"{path}: fortran_order=True no soportado", field="fortran_order", path=path)
    shape = header["shape"]
    if (not isinstance(shape, tuple) or len(shape) not in (2, 3)
            or not all(isinstance(s, int) and s >= 0 for s in shape)):
        raise FormatError(f"{path}: forma {shape!r} no soportada (N×D o N×T×D)", field="shape", path=path)
    return descr, shape, start + header_len


def read_feature_header(path: PathLike) -> Tuple[str, Tuple[int, ...]]:
    """Lee solo la cabecera: (dtype, forma)"""
    path = Path(path)
    try:
        with open(path, "rb") as f:
            prefix = f.read(10)
            if len(prefix) == 10 and prefix[:6] == MAGIC:
                (header_len,) = struct.unpack_from("<H", prefix, 8)
                prefix += f.read(header_len)
    except OSError as e:
        raise FeatureIOError(f"no se pudo leer {path}: {e}", {"path": str(path)})
    descr, shape, _ = _parse_header(prefix, str(path))
    return _DESCR_TO_DTYPE[descr], shape


def load_feature_file(path: PathLike, role: str = "latent", name: str = "") -> FeatureSet:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise FeatureIOError(f"no se pudo leer {path}: {e}", {"path": str(path)})
    descr, shape, offset = _parse_header(raw, str(path))
    count = int(np.prod(shape))
    itemsize = np.dtype(descr).itemsize
    if len(raw) - offset != count * itemsize:
        raise FormatError(
            f"{path}: tamaño de datos {len(raw) - offset} no coincide con la forma {shape}",
            field="shape", path=str(path),
        )
    data = np.frombuffer(raw, dtype=descr, count=count, offset=offset).reshape(shape)
    check_finite(data, where=str(path))
    return FeatureSet(
        data=data.astype(np.float64),
        role=role,
        name=name or path.stem,
        source=str(path),
        dtype=_DESCR_TO_DTYPE[descr],
    )


def _header_bytes(descr: str, shape: Tuple[int, ...]) -> bytes:
    text = "{'descr': '%s', 'fortran_order': False, 'shape': %r, }" % (descr, tuple(int(s) for s in shape))
    # relleno con espacios hasta alinear; la cabecera termina en '\n'
    total = len(MAGIC) + 4 + len(text) + 1
    text += " " * ((-total) % ALIGNMENT) + "\n"
    return MAGIC + bytes(VERSION) + struct.pack("<H", len(text)) + text.encode("latin1")


def save_feature_file(fs: FeatureSet, path: PathLike, overwrite: bool = False) -> Path:
    path = Path(path)
    check_finite(fs.data, where=fs.name)
    descr = DTYPES[fs.dtype]
    payload = np.ascontiguousarray(fs.data, dtype=descr).tobytes()
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb" if overwrite else "xb") as f:
            f.write(_header_bytes(descr, fs.data.shape))
            f.write(payload)
    except FileExistsError:
        raise FeatureIOError(f"el archivo ya existe (use overwrite): {path}", {"path": str(path)})
    except OSError as e:
        raise FeatureIOError(f"no se pudo escribir {path}: {e}", {"path": str(path)})
    logger.debug(f"features '{fs.name}' {fs.data.shape} guardadas en {path}")
    return path
