"""
Estimadores de información mutua: MINE, LMI y KSG
"""
import logging
from typing import Any, Callable, Dict, Optional

from services.errors import UsageError
from services.metrics.distances import ArrayLike
from services.mi.ksg import ksg_estimate
from services.mi.lmi import LmiConfig, lmi_estimate
from services.mi.mine import MiEstimate, MineConfig, mine_estimate
from services.reporting import config_hash

logger = logging.getLogger(__name__)


def _run_mine(x, y, options, seed, pooling):
    return mine_estimate(x, y, MineConfig(**{**options, "seed": seed}), pooling)


def _run_lmi(x, y, options, seed, pooling):
    return lmi_estimate(x, y, LmiConfig(**{**options, "seed": seed}), pooling)


def _run_ksg(x, y, options, seed, pooling):
    neighbors = int(options.get("neighbors", 5))
    raw = ksg_estimate(x, y, neighbors=neighbors, pooling=pooling)
    return MiEstimate(estimator="ksg", value=max(0.0, raw), raw=raw,
                      config_hash=config_hash({"neighbors": neighbors}), seed=seed)


ESTIMATORS: Dict[str, Callable[..., MiEstimate]] = {
    "mine": _run_mine,
    "lmi": _run_lmi,
    "ksg": _run_ksg,
}


def run_estimator(name: str, x: ArrayLike, y: ArrayLike, options: Optional[Dict[str, Any]] = None,
                  seed: int = 0, pooling: str = "mean") -> MiEstimate:
    """Despacha un estimador por nombre con opciones de configuración planas"""
    if name not in ESTIMATORS:
        raise UsageError(f"estimador desconocido '{name}'; válidos: {sorted(ESTIMATORS)}",
                         {"valid": sorted(ESTIMATORS)})
    return ESTIMATORS[name](x, y, dict(options or {}), seed, pooling)


__all__ = [
    "ESTIMATORS",
    "LmiConfig",
    "MiEstimate",
    "MineConfig",
    "ksg_estimate",
    "lmi_estimate",
    "mine_estimate",
    "run_estimator",
]
