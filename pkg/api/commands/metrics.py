"""
featprobe metrics: FD, KD (RBF/poly), coseno y MI 1D gaussiana sobre un manifiesto
"""
import logging

from api.commands.common import emit_report, load_pair, pooling_flag, seed_list
from services.metrics import KernelConfig, parse_metric_names
from services.metrics.suite import METRICS
from services.training import evaluate_pathways

logger = logging.getLogger(__name__)


def register(subparsers, parents) -> None:
    parser = subparsers.add_parser("metrics", parents=parents, help="métricas de distancia entre vías")
    parser.add_argument("manifest")
    parser.add_argument("--metrics", default=",".join(METRICS), help=f"subconjunto de {','.join(METRICS)}")
    parser.add_argument("--adapted-role", default="adapted")
    parser.add_argument("--expert-role", default="expert")
    parser.add_argument("--gamma", type=float, default=None, help="γ fijo para kd_rbf (por defecto: mediana)")
    parser.add_argument("--seeds", type=int, default=1, help="repeticiones con semillas consecutivas")
    pooling_flag(parser)
    parser.set_defaults(handler=cmd_metrics)


def cmd_metrics(args) -> int:
    names = parse_metric_names(args.metrics)
    adapted, expert = load_pair(args.manifest, args.adapted_role, args.expert_role)
    kernels = {"rbf": KernelConfig(kind="rbf", gamma=args.gamma)}
    report = evaluate_pathways(adapted, expert, names, experiment=adapted.source, seeds=seed_list(args),
                               pooling=args.pooling, kernels=kernels)
    emit_report(args, report)
    return 0
