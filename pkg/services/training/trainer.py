"""
Motor de entrenamiento del neck: adaptación directa y adaptación cruzada
(segundo neck sobre la salida de un neck congelado)
"""
import hashlib
import logging
import math
import time
from collections import deque
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, model_validator

from services.autodiff import AdamState, Tensor, adam_step, backward
from services.autodiff import engine as ad
from services.config import runtime_environment
from services.errors import ConfigError, InvariantViolation, NumericError, TrainingAbort
from services.featio.features import FeatureSet, check_finite
from services.metrics.distances import frechet_distance, summarize
from services.neck import NeckConfig, NeckParams, neck_apply, neck_forward, neck_init
from services.reporting import canonical_json, config_hash
from services.training.objective import LossBreakdown, alpha_schedule, combined_tensor, distill_loss
from services.training.task import FrozenHead, TaskSpec, build_head

logger = logging.getLogger(__name__)

ABORT_HISTORY = 10


class TrainConfig(BaseModel):
    experiment: str = "default"
    total_steps: int = Field(3000, ge=1)
    batch_size: int = Field(64, ge=1)
    lr: float = Field(1e-3, gt=0)
    beta1: float = Field(0.9, ge=0.0, lt=1.0)
    beta2: float = Field(0.999, ge=0.0, lt=1.0)
    eps: float = Field(1e-8, gt=0)
    schedule: str = Field("linear", pattern="^linear$")
    horizon: Optional[int] = Field(None, ge=1)  # por defecto: total_steps - 1
    alpha_hold: int = Field(0, ge=0)  # pasos iniciales con α = 1
    distillation: bool = True
    seed: int = 0
    eval_interval: int = Field(100, ge=1)
    log_interval: int = Field(100, ge=1)
    holdout: float = Field(0.2, ge=0.0, lt=1.0)
    track_fd: bool = False
    eval_metrics: List[str] = Field(default_factory=list)

    @model_validator(mode="after")
    def _horizon_within_run(self):
        if self.horizon is not None and self.horizon > self.total_steps:
            raise ValueError(f"horizon ({self.horizon}) debe ser ≤ total_steps ({self.total_steps})")
        if self.alpha_hold >= self.total_steps and self.distillation:
            raise ValueError(f"alpha_hold ({self.alpha_hold}) debe ser < total_steps ({self.total_steps})")
        return self

    def resolved_horizon(self) -> int:
        if self.horizon is not None:
            return self.horizon
        return max(1, self.total_steps - 1 - self.alpha_hold)

    def alpha(self, step: int) -> float:
        if not self.distillation:
            return 0.0
        return alpha_schedule(max(0, step - self.alpha_hold), self.resolved_horizon())


class RunRecord(BaseModel):
    experiment: str
    tag: str
    seed: int
    config: Dict[str, Any]
    breakdowns: List[LossBreakdown] = Field(default_factory=list)
    eval_history: List[Tuple[int, float]] = Field(default_factory=list)
    final: Dict[str, Any] = Field(default_factory=dict)
    checkpoint: Optional[str] = None
    wall_clock: float = 0.0
    config_hash: str
    neck_digest: str = ""
    direct_loss: Optional[float] = None
    delta_pct: Optional[float] = None
    environment: Dict[str, str] = Field(default_factory=runtime_environment)

    @property
    def heldout_loss(self) -> float:
        return float(self.final["heldout_task_loss"])

    def digest(self) -> str:
        """Hash reproducible del registro: excluye el tiempo de reloj"""
        payload = self.model_dump(exclude={"wall_clock"})
        return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()


@dataclass
class TrainingData:
    """Features emparejadas de una tarea; `targets` se deriva de la cabeza si falta"""
    encoder: FeatureSet
    expert: FeatureSet
    targets: Optional[FeatureSet] = None


def experiment_seed(experiment: str) -> int:
    return int(hashlib.sha256(experiment.encode("utf-8")).hexdigest()[:8], 16)


def split_indices(n: int, holdout: float, experiment: str) -> Tuple[np.ndarray, np.ndarray]:
    """80/20 por defecto; la permutación depende solo del id del experimento"""
    if holdout <= 0:
        everything = np.arange(n)
        return everything, everything
    order = np.random.default_rng(experiment_seed(experiment)).permutation(n)
    n_eval = max(1, int(round(n * holdout)))
    if n - n_eval < 1:
        raise ConfigError(f"split inválido: N={n} con holdout={holdout}")
    return np.sort(order[n_eval:]), np.sort(order[:n_eval])


def as_tokens(data: np.ndarray, tokens: int, what: str) -> np.ndarray:
    if data.ndim == 2:
        return np.repeat(data[:, None, :], tokens, axis=1)
    if data.shape[1] != tokens:
        raise ConfigError(f"{what}: {data.shape[1]} tokens, el neck espera {tokens}")
    return data


@dataclass
class _Arrays:
    inputs: np.ndarray
    expert: np.ndarray
    targets: np.ndarray


def _prepare(inputs: np.ndarray, data: TrainingData, neck_cfg: NeckConfig, head: FrozenHead) -> _Arrays:
    if inputs.shape[0] != data.expert.n:
        raise ConfigError(f"encoder y experto no emparejados: N={inputs.shape[0]} vs {data.expert.n}")
    inputs = as_tokens(inputs, neck_cfg.tokens, "encoder")
    if inputs.shape[-1] != neck_cfg.d_in:
        raise ConfigError(f"d_in={neck_cfg.d_in} no coincide con las features de entrada ({inputs.shape[-1]})")
    expert = as_tokens(data.expert.data, neck_cfg.tokens, "experto")
    if expert.shape[-1] != neck_cfg.d_out:
        raise ConfigError(f"d_out={neck_cfg.d_out} no coincide con las features del experto ({expert.shape[-1]})")
    if data.targets is not None:
        targets = as_tokens(data.targets.data, neck_cfg.tokens, "targets")
    else:
        targets = head.apply(expert)
    if targets.shape[-1] != head.out_dim:
        raise ConfigError(f"targets de dimensión {targets.shape[-1]}, la cabeza produce {head.out_dim}")
    check_finite(inputs, where="entrada del neck")
    return _Arrays(inputs=inputs, expert=expert, targets=targets.reshape(-1, head.out_dim))


def _task_loss_on(params: NeckParams, head: FrozenHead, arrays: _Arrays, idx: np.ndarray) -> float:
    adapted = neck_apply(params, arrays.inputs[idx])
    pred = head.apply(adapted).reshape(-1, head.out_dim)
    target = arrays.targets.reshape(arrays.inputs.shape[0], -1, head.out_dim)[idx].reshape(-1, head.out_dim)
    diff = pred - target
    return float(np.mean(diff * diff))


def _fd_to_expert(params: NeckParams, arrays: _Arrays, idx: np.ndarray) -> float:
    adapted = neck_apply(params, arrays.inputs[idx]).mean(axis=1)
    return frechet_distance(summarize(adapted), summarize(arrays.expert[idx].mean(axis=1)))


def _fit(cfg: TrainConfig, neck_cfg: NeckConfig, arrays: _Arrays, head: FrozenHead, tag: str,
         extra_config: Dict[str, Any]) -> Tuple[RunRecord, NeckParams]:
    started = time.perf_counter()
    n = arrays.inputs.shape[0]
    train_idx, eval_idx = split_indices(n, cfg.holdout, cfg.experiment)
    rng = np.random.default_rng(cfg.seed)
    neck_cfg = neck_cfg.model_copy(update={"seed": cfg.seed})
    params = neck_init(neck_cfg)
    state = AdamState(lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)
    targets_tok = arrays.targets.reshape(n, -1, head.out_dim)

    record = RunRecord(
        experiment=cfg.experiment, tag=tag, seed=cfg.seed,
        config={"train": cfg.model_dump(), "neck": neck_cfg.model_dump(), **extra_config},
        config_hash=config_hash(cfg, neck_cfg, extra_config),
    )
    final: Dict[str, Any] = {}
    if cfg.track_fd:
        final["fd_init"] = _fd_to_expert(params, arrays, eval_idx)

    recent: deque = deque(maxlen=ABORT_HISTORY)
    batch = min(cfg.batch_size, len(train_idx))
    logger.info(f"entrenando {neck_cfg.variant_name()} ({params.count()} parámetros) '{tag}': "
                f"{cfg.total_steps} pasos, batch {batch}, N_train={len(train_idx)}, N_eval={len(eval_idx)}")

    for step in range(cfg.total_steps):
        if batch < len(train_idx):
            idx = np.sort(rng.choice(train_idx, batch, replace=False))
        else:
            idx = train_idx
        alpha = cfg.alpha(step)
        try:
            adapted = neck_forward(params, Tensor(arrays.inputs[idx]))
            l_d = distill_loss(adapted, arrays.expert[idx])
            l_t = ad.mse(head.forward(adapted), Tensor(targets_tok[idx].reshape(-1, head.out_dim)))
            loss = combined_tensor(alpha, l_d, l_t)
        except NumericError as e:
            raise TrainingAbort(f"'{tag}' paso {step}: {e.message}", [b.as_row() for b in recent])

        breakdown = LossBreakdown(step=step, alpha=alpha, distill=l_d.item(), task=l_t.item(), total=loss.item())
        recent.append(breakdown)
        record.breakdowns.append(breakdown)
        if not math.isfinite(breakdown.total):
            raise TrainingAbort(f"'{tag}': pérdida no finita en el paso {step}", [b.as_row() for b in recent])
        if step % cfg.log_interval == 0:
            logger.info(f"[{tag}] paso {step}: α={alpha:.3f} L_D={breakdown.distill:.6g} "
                        f"L_T={breakdown.task:.6g} L={breakdown.total:.6g}")
        else:
            logger.debug(f"[{tag}] paso {step}: α={alpha:.3f} L={breakdown.total:.6g}")

        grads = backward(loss, params.tensors)
        try:
            adam_step(params.tensors, grads, state)
        except NumericError as e:
            raise TrainingAbort(f"'{tag}' paso {step}: {e.message}", [b.as_row() for b in recent])

        if cfg.track_fd and cfg.distillation and step + 1 == max(1, cfg.alpha_hold):
            final["fd_after_hold"] = _fd_to_expert(params, arrays, eval_idx)
        if (step + 1) % cfg.eval_interval == 0 or step + 1 == cfg.total_steps:
            held = _task_loss_on(params, head, arrays, eval_idx)
            record.eval_history.append((step + 1, held))

    head.verify()
    final["heldout_task_loss"] = record.eval_history[-1][1]
    final["train_task_loss"] = record.breakdowns[-1].task
    if cfg.track_fd:
        final["fd_final"] = _fd_to_expert(params, arrays, eval_idx)
    record.final = final
    record.neck_digest = params.digest()
    record.wall_clock = round(time.perf_counter() - started, 3)
    logger.info(f"[{tag}] terminado: pérdida de tarea reservada {final['heldout_task_loss']:.6g}")
    return record, params


def train_neck(cfg: TrainConfig, neck_cfg: NeckConfig, data: TrainingData, task: TaskSpec,
               tracker=None) -> Tuple[RunRecord, NeckParams]:
    """Entrena un neck sobre features congeladas del encoder con la cabeza congelada de la tarea"""
    encoder_digest = data.encoder.digest()
    head = build_head(task, neck_cfg.d_out)
    arrays = _prepare(data.encoder.data, data, neck_cfg, head)
    record, params = _fit(cfg, neck_cfg, arrays, head, task.task_id,
                          {"task": task.model_dump(), "encoder_digest": encoder_digest})
    _verify_encoder(data, encoder_digest)
    if cfg.eval_metrics:
        record.final["metrics"] = _eval_metrics(cfg, params, arrays)
    if tracker is not None:
        tracker.record_run(record, params)
    return record, params


def train_cross_neck(neck1: NeckParams, cfg: TrainConfig, neck2_cfg: NeckConfig, data: TrainingData,
                     task2: TaskSpec, upstream_task: str = "task1", direct: Optional[RunRecord] = None,
                     tracker=None) -> Tuple[RunRecord, NeckParams]:
    """
    encoder -> neck1 (congelado) -> neck2 (entrenable) -> cabeza de la tarea 2.
    Con un registro directo de referencia se calcula delta_pct.
    """
    if neck2_cfg.d_in != neck1.config.d_out:
        raise ConfigError(f"dimensiones de neck incompatibles: neck1.d_out={neck1.config.d_out} "
                          f"≠ neck2.d_in={neck2_cfg.d_in}",
                          {"neck1_d_out": neck1.config.d_out, "neck2_d_in": neck2_cfg.d_in})
    if neck2_cfg.tokens != neck1.config.tokens:
        raise ConfigError(f"tokens incompatibles: {neck1.config.tokens} vs {neck2_cfg.tokens}")
    encoder_digest = data.encoder.digest()
    frozen = neck1.frozen()
    before = frozen.digest()
    upstream = neck_apply(frozen, as_tokens(data.encoder.data, neck1.config.tokens, "encoder"))
    if frozen.digest() != before or neck1.digest() != before:
        raise InvariantViolation("neck1 cambió durante la adaptación cruzada")

    head = build_head(task2, neck2_cfg.d_out)
    arrays = _prepare(upstream, data, neck2_cfg, head)
    tag = f"{upstream_task} → {task2.task_id}"
    record, params = _fit(cfg, neck2_cfg, arrays, head, tag,
                          {"task": task2.model_dump(), "neck1_digest": before,
                           "neck1": neck1.config.model_dump(), "encoder_digest": encoder_digest})
    _verify_encoder(data, encoder_digest)
    if neck1.digest() != before:
        raise InvariantViolation("neck1 cambió durante la adaptación cruzada")
    if direct is not None:
        record.direct_loss = direct.heldout_loss
        record.delta_pct = relative_change(direct.heldout_loss, record.heldout_loss)
    if cfg.eval_metrics:
        record.final["metrics"] = _eval_metrics(cfg, params, arrays)
    if tracker is not None:
        tracker.record_run(record, params)
    return record, params


def _verify_encoder(data: TrainingData, expected: str) -> None:
    if data.encoder.digest() != expected:
        raise InvariantViolation(f"las features del encoder '{data.encoder.name}' cambiaron durante el entrenamiento")


def relative_change(direct_loss: float, cross_loss: float) -> Optional[float]:
    """Cambio relativo en % respecto a la adaptación directa; negativo si la vía cruzada empeora"""
    if direct_loss == 0:
        return None
    return 100.0 * (direct_loss - cross_loss) / direct_loss


def _eval_metrics(cfg: TrainConfig, params: NeckParams, arrays: _Arrays) -> Dict[str, Any]:
    from services.training.pathways import evaluate_pathways

    _, eval_idx = split_indices(arrays.inputs.shape[0], cfg.holdout, cfg.experiment)
    adapted = FeatureSet(neck_apply(params, arrays.inputs[eval_idx]), role="adapted", name="adapted")
    expert = FeatureSet(arrays.expert[eval_idx], role="expert", name="expert")
    report = evaluate_pathways(adapted, expert, cfg.eval_metrics, experiment=cfg.experiment, seeds=[cfg.seed])
    return {m.name: m.model_dump() for m in report.metrics}
