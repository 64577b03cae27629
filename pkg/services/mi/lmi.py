"""
LMI: proyecciones lineales aprendidas a k dimensiones más un estimador latente
"""
import logging
import math
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, Field

from services.autodiff import Tensor
from services.autodiff import engine as ad
from services.errors import ConfigError, InsufficientDataError
from services.metrics.distances import ArrayLike
from services.mi.dv import (
    DvSchedule,
    critic_forward,
    critic_init,
    holdout_split,
    standardize,
    train_dv,
)
from services.mi.ksg import MIN_SAMPLES, ksg_estimate
from services.mi.mine import MiEstimate, paired_samples
from services.reporting import config_hash

logger = logging.getLogger(__name__)


class LmiConfig(BaseModel):
    k: int = Field(8, ge=1)
    projection: str = Field("linear", pattern="^linear$")
    critic_hidden: List[int] = Field(default_factory=lambda: [64, 64])
    lr: float = Field(1e-3, gt=0)
    batch_size: int = Field(256, ge=2)
    steps: int = Field(3000, ge=1)
    ema_rate: float = Field(0.99, gt=0.0, lt=1.0)
    eval_batches: int = Field(20, ge=1)
    eval_interval: int = Field(100, ge=1)
    holdout: float = Field(0.2, gt=0.0, lt=1.0)
    divergence_limit: float = Field(50.0, gt=0)
    latent_estimator: str = Field("ksg", pattern="^(ksg|dv)$")
    neighbors: int = Field(5, ge=1)
    seed: int = 0


def _projection(rng: np.random.Generator, d: int, k: int, name: str) -> Tensor:
    return Tensor(rng.standard_normal((d, k)) / math.sqrt(d), requires_grad=True, name=name)


def lmi_estimate(x: ArrayLike, y: ArrayLike, cfg: Optional[LmiConfig] = None,
                 pooling: str = "mean") -> MiEstimate:
    """
    Aprende P_X: D_X→k y P_Y: D_Y→k junto con un crítico pequeño sobre la cota DV.
    La MI final se mide sobre las proyecciones del split reservado.
    """
    cfg = cfg or LmiConfig()
    xs, ys = paired_samples(x, y, pooling, "lmi_estimate")
    if cfg.k > min(xs.shape[1], ys.shape[1]):
        raise ConfigError(f"k={cfg.k} excede min(D_X, D_Y) = {min(xs.shape[1], ys.shape[1])}",
                          {"k": cfg.k, "dims": [xs.shape[1], ys.shape[1]]})
    n = xs.shape[0]
    if n < 4 * cfg.batch_size:
        raise InsufficientDataError(f"LMI necesita N ≥ 4·batch = {4 * cfg.batch_size} (N={n})",
                                    {"n": n, "batch_size": cfg.batch_size})

    rng = np.random.default_rng(cfg.seed)
    train_idx, eval_idx = holdout_split(n, cfg.holdout, rng)
    if cfg.latent_estimator == "ksg" and len(eval_idx) < MIN_SAMPLES:
        raise InsufficientDataError(f"split reservado de {len(eval_idx)} muestras < {MIN_SAMPLES} para KSG")
    x_train, x_eval = standardize(xs[train_idx], xs[eval_idx])
    y_train, y_eval = standardize(ys[train_idx], ys[eval_idx])

    params = {
        "proj.x": _projection(rng, xs.shape[1], cfg.k, "proj.x"),
        "proj.y": _projection(rng, ys.shape[1], cfg.k, "proj.y"),
    }
    params.update(critic_init(2 * cfg.k, cfg.critic_hidden, rng))
    depth = len(cfg.critic_hidden)

    def score(p, xb: Tensor, yb: Tensor) -> Tensor:
        joint = ad.concat_cols(ad.matmul(xb, p["proj.x"]), ad.matmul(yb, p["proj.y"]))
        return critic_forward(p, joint, depth)

    schedule = DvSchedule(steps=cfg.steps, batch_size=cfg.batch_size, lr=cfg.lr, ema_rate=cfg.ema_rate,
                          eval_interval=cfg.eval_interval, eval_batches=cfg.eval_batches,
                          divergence_limit=cfg.divergence_limit)
    trace = train_dv(score, params, (x_train, y_train), (x_eval, y_eval), schedule, rng, label="lmi")

    if cfg.latent_estimator == "ksg":
        zx = x_eval @ params["proj.x"].data
        zy = y_eval @ params["proj.y"].data
        raw = ksg_estimate(zx, zy, neighbors=cfg.neighbors)
    else:
        raw = trace.estimate
    logger.info(f"LMI (k={cfg.k}, latente={cfg.latent_estimator}): {max(0.0, raw):.4f} nats")
    return MiEstimate(estimator="lmi", value=max(0.0, raw), raw=raw, curve=trace.curve,
                      config_hash=config_hash(cfg), seed=cfg.seed, n_train=len(train_idx),
                      n_eval=len(eval_idx), latent_estimator=cfg.latent_estimator)

