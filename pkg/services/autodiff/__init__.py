from services.autodiff.engine import Graph, Tensor, backward
from services.autodiff.optim import AdamState, adam_step

__all__ = ["Tensor", "Graph", "backward", "AdamState", "adam_step"]
