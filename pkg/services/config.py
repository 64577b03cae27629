"""
Configuración de entorno para featprobe
"""
import os

from dotenv import load_dotenv

load_dotenv()

TOOLKIT_VERSION = "0.3.0"

RUNS_DIR = os.getenv("FEATPROBE_RUNS_DIR", "runs")
LOG_LEVEL = os.getenv("FEATPROBE_LOG_LEVEL", "INFO")
POOLING = os.getenv("FEATPROBE_POOLING", "mean")

# Muestreo gaussiano: generador PCG64 de numpy con su ziggurat
RNG_NAME = "numpy.PCG64/ziggurat"


def default_jobs() -> int:
    """Número de workers por defecto para los barridos"""
    env = os.getenv("FEATPROBE_JOBS")
    if env:
        return max(1, int(env))
    return max(1, os.cpu_count() or 1)


def blas_threads() -> str:
    """Hilos BLAS declarados en el entorno (se registran en los reportes)"""
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        value = os.getenv(var)
        if value:
            return value
    return "default"


def runtime_environment() -> dict:
    """Generador aleatorio y paralelismo numérico con que se produjo un reporte"""
    return {"rng": RNG_NAME, "blas_threads": blas_threads()}
