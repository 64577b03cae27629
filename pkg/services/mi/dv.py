"""
Red crítica MLP y bucle de entrenamiento de la cota de Donsker-Varadhan,
compartidos por MINE y LMI
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

from services.autodiff import AdamState, Tensor, adam_step, backward
from services.autodiff import engine as ad
from services.errors import EstimationError, InsufficientDataError, NumericError

logger = logging.getLogger(__name__)

Params = Dict[str, Tensor]
ScoreFn = Callable[[Params, Tensor, Tensor], Tensor]


def critic_init(in_dim: int, hidden: Sequence[int], rng: np.random.Generator, prefix: str = "critic") -> Params:
    """Pesos He-normales, sesgos a cero; salida escalar"""
    params: Params = {}
    widths = [in_dim, *hidden, 1]
    for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
        std = math.sqrt(2.0 / fan_in) if i < len(hidden) else math.sqrt(1.0 / fan_in)
        params[f"{prefix}.{i}.weight"] = Tensor(rng.standard_normal((fan_in, fan_out)) * std,
                                                requires_grad=True, name=f"{prefix}.{i}.weight")
        params[f"{prefix}.{i}.bias"] = Tensor(np.zeros(fan_out), requires_grad=True, name=f"{prefix}.{i}.bias")
    return params


def critic_forward(params: Params, h: Tensor, depth: int, activation: str = "relu",
                   prefix: str = "critic") -> Tensor:
    for i in range(depth + 1):
        h = ad.linear(h, params[f"{prefix}.{i}.weight"], params[f"{prefix}.{i}.bias"])
        if i < depth:
            h = ad.elementwise(activation, h)
    return h


def dv_bound(t_joint: np.ndarray, t_marginal: np.ndarray) -> float:
    """E_joint[T] - ln E_marginal[e^T]"""
    t_marginal = np.ravel(t_marginal)
    return float(np.mean(t_joint) - (logsumexp(t_marginal) - math.log(t_marginal.size)))


def standardize(train: np.ndarray, *others: np.ndarray) -> Tuple[np.ndarray, ...]:
    """Estandariza por dimensión con las estadísticas del split de entrenamiento"""
    mu = train.mean(axis=0)
    sd = train.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    return tuple((a - mu) / sd for a in (train, *others))


def holdout_split(n: int, fraction: float, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    order = rng.permutation(n)
    n_eval = max(1, int(round(n * fraction)))
    return order[n_eval:], order[:n_eval]


@dataclass
class DvSchedule:
    steps: int
    batch_size: int
    lr: float
    ema_rate: float
    eval_interval: int
    eval_batches: int
    divergence_limit: float = 50.0


@dataclass
class DvTrace:
    curve: List[float] = field(default_factory=list)
    tail: List[float] = field(default_factory=list)

    @property
    def estimate(self) -> float:
        return float(np.mean(self.tail)) if self.tail else float("nan")


def train_dv(score: ScoreFn, params: Params, train: Tuple[np.ndarray, np.ndarray],
             held_out: Tuple[np.ndarray, np.ndarray], schedule: DvSchedule,
             rng: np.random.Generator, label: str = "dv") -> DvTrace:
    """
    Maximiza la cota DV con marginales por permutación dentro del lote.
    El gradiente del denominador usa una media móvil exponencial de E[e^T].
    Evalúa la cota sobre todo el split reservado cada `eval_interval` pasos
    y en cada uno de los últimos `eval_batches` pasos.
    """
    x_train, y_train = train
    x_eval, y_eval = held_out
    n_train = x_train.shape[0]
    if n_train < schedule.batch_size:
        raise InsufficientDataError(
            f"{label}: {n_train} muestras de entrenamiento < batch {schedule.batch_size}")

    eval_perm = rng.permutation(x_eval.shape[0])
    x_eval_t, y_eval_t, y_marg_t = Tensor(x_eval), Tensor(y_eval), Tensor(y_eval[eval_perm])
    state = AdamState(lr=schedule.lr)
    trace = DvTrace()
    ema = None
    tail_start = schedule.steps - schedule.eval_batches

    for step in range(schedule.steps):
        idx = rng.choice(n_train, schedule.batch_size, replace=False)
        shuffle = rng.permutation(schedule.batch_size)
        xb = Tensor(x_train[idx])
        yb = y_train[idx]
        t_joint = score(params, xb, Tensor(yb))
        exp_marg = ad.exp(score(params, xb, Tensor(yb[shuffle])))
        batch_mean = float(exp_marg.data.mean())
        ema = batch_mean if ema is None else schedule.ema_rate * ema + (1.0 - schedule.ema_rate) * batch_mean
        if not (math.isfinite(batch_mean) and ema > 0):
            raise EstimationError(f"{label}: E[e^T] no finito en el paso {step}", trace.curve)
        loss = ad.neg(ad.sub(ad.mean(t_joint), ad.scale(ad.mean(exp_marg), 1.0 / ema)))
        grads = backward(loss, params)
        try:
            adam_step(params, grads, state)
        except NumericError as e:
            raise EstimationError(f"{label}: {e.message}", trace.curve)

        in_tail = step >= tail_start
        if in_tail or (step + 1) % schedule.eval_interval == 0:
            value = dv_bound(score(params, x_eval_t, y_eval_t).data, score(params, x_eval_t, y_marg_t).data)
            trace.curve.append(value)
            if not math.isfinite(value) or value > schedule.divergence_limit:
                logger.warning(f"{label}: divergencia en el paso {step} (DV={value})")
                raise EstimationError(
                    f"{label}: entrenamiento divergente (DV={value} nats en el paso {step})", trace.curve)
            if in_tail:
                trace.tail.append(value)
            logger.debug(f"{label} paso {step + 1}/{schedule.steps}: DV reservado {value:.4f}")
    return trace
