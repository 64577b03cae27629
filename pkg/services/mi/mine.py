"""
MINE: estimador neural de información mutua por la cota de Donsker-Varadhan
"""
import logging
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, Field, model_validator

from services.autodiff import Tensor
from services.autodiff import engine as ad
from services.errors import DimensionError, InsufficientDataError
from services.metrics.distances import ArrayLike, as_samples
from services.mi.dv import DvSchedule, critic_forward, critic_init, holdout_split, standardize, train_dv
from services.reporting import config_hash

logger = logging.getLogger(__name__)


class MineConfig(BaseModel):
    hidden: List[int] = Field(default_factory=lambda: [128, 128])
    activation: str = Field("relu", pattern="^(relu|gelu|tanh)$")
    lr: float = Field(5e-4, gt=0)
    batch_size: int = Field(256, ge=2)
    steps: int = Field(3000, ge=1)
    ema_rate: float = Field(0.99, gt=0.0, lt=1.0)
    eval_batches: int = Field(20, ge=1)
    eval_interval: int = Field(100, ge=1)
    holdout: float = Field(0.2, gt=0.0, lt=1.0)
    divergence_limit: float = Field(50.0, gt=0)
    seed: int = 0

    @model_validator(mode="after")
    def _steps_cover_eval(self):
        if self.steps < self.eval_batches:
            raise ValueError(f"steps ({self.steps}) debe ser ≥ eval_batches ({self.eval_batches})")
        if any(w < 1 for w in self.hidden):
            raise ValueError(f"anchos ocultos inválidos {self.hidden}")
        return self


class MiEstimate(BaseModel):
    estimator: str
    value: float
    raw: float
    curve: List[float] = Field(default_factory=list)
    config_hash: str
    seed: int
    n_train: int = 0
    n_eval: int = 0
    latent_estimator: Optional[str] = None

    @property
    def units(self) -> str:
        return "nats"

    @property
    def diagnostics(self):
        return {"raw": self.raw, "curve": self.curve, "config_hash": self.config_hash,
                "seed": self.seed, "n_train": self.n_train, "n_eval": self.n_eval}


def paired_samples(x: ArrayLike, y: ArrayLike, pooling: str, op: str):
    xs, ys = as_samples(x, pooling), as_samples(y, pooling)
    if xs.shape[0] != ys.shape[0]:
        raise DimensionError(op, xs.shape, ys.shape)
    return xs, ys


def mine_estimate(x: ArrayLike, y: ArrayLike, cfg: Optional[MineConfig] = None,
                  pooling: str = "mean") -> MiEstimate:
    """
    Entrena T(x, y) sobre [x, y] concatenados maximizando la cota DV; el valor
    final es la media de las últimas evaluaciones sobre el 20% reservado, acotada a ≥ 0.
    """
    cfg = cfg or MineConfig()
    xs, ys = paired_samples(x, y, pooling, "mine_estimate")
    n = xs.shape[0]
    if n < 4 * cfg.batch_size:
        raise InsufficientDataError(f"MINE necesita N ≥ 4·batch = {4 * cfg.batch_size} (N={n})",
                                    {"n": n, "batch_size": cfg.batch_size})

    rng = np.random.default_rng(cfg.seed)
    train_idx, eval_idx = holdout_split(n, cfg.holdout, rng)
    x_train, x_eval = standardize(xs[train_idx], xs[eval_idx])
    y_train, y_eval = standardize(ys[train_idx], ys[eval_idx])

    params = critic_init(xs.shape[1] + ys.shape[1], cfg.hidden, rng)
    depth = len(cfg.hidden)

    def score(p, xb: Tensor, yb: Tensor) -> Tensor:
        return critic_forward(p, ad.concat_cols(xb, yb), depth, cfg.activation)

    schedule = DvSchedule(steps=cfg.steps, batch_size=cfg.batch_size, lr=cfg.lr, ema_rate=cfg.ema_rate,
                          eval_interval=cfg.eval_interval, eval_batches=cfg.eval_batches,
                          divergence_limit=cfg.divergence_limit)
    trace = train_dv(score, params, (x_train, y_train), (x_eval, y_eval), schedule, rng, label="mine")
    raw = trace.estimate
    logger.info(f"MINE: {max(0.0, raw):.4f} nats (bruto {raw:.4f}, {len(trace.curve)} evaluaciones)")
    return MiEstimate(estimator="mine", value=max(0.0, raw), raw=raw, curve=trace.curve,
                      config_hash=config_hash(cfg), seed=cfg.seed,
                      n_train=len(train_idx), n_eval=len(eval_idx))
