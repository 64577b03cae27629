from services.neck.checkpoint import load_checkpoint, save_checkpoint
from services.neck.model import NeckConfig, NeckParams, neck_apply, neck_forward, neck_init, parameter_count

__all__ = [
    "NeckConfig",
    "NeckParams",
    "neck_init",
    "neck_forward",
    "neck_apply",
    "parameter_count",
    "save_checkpoint",
    "load_checkpoint",
]
