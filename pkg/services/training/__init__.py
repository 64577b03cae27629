from services.training.objective import LossBreakdown, alpha_schedule, combined_loss, distill_loss
from services.training.pathways import evaluate_pathways
from services.training.task import FrozenHead, TaskSpec, build_head
from services.training.trainer import (
    RunRecord,
    TrainConfig,
    TrainingData,
    relative_change,
    split_indices,
    train_cross_neck,
    train_neck,
)

__all__ = [
    "LossBreakdown",
    "alpha_schedule",
    "combined_loss",
    "distill_loss",
    "evaluate_pathways",
    "FrozenHead",
    "TaskSpec",
    "build_head",
    "RunRecord",
    "TrainConfig",
    "TrainingData",
    "relative_change",
    "split_indices",
    "train_cross_neck",
    "train_neck",
]
