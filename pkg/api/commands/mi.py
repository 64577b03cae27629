"""
featprobe mi: estimadores de información mutua (mine, lmi, ksg) sobre un manifiesto
"""
import logging
from typing import Any, Dict

from api.commands.common import emit_report, load_pair, pooling_flag, seed_list
from services.errors import UsageError
from services.mi import ESTIMATORS
from services.training import evaluate_pathways

logger = logging.getLogger(__name__)


def register(subparsers, parents) -> None:
    parser = subparsers.add_parser("mi", parents=parents, help="estimación de información mutua")
    parser.add_argument("manifest")
    parser.add_argument("--estimator", default="mine", help=f"uno o varios de {','.join(ESTIMATORS)}")
    parser.add_argument("--adapted-role", default="adapted")
    parser.add_argument("--expert-role", default="expert")
    parser.add_argument("--steps", type=int, default=None)
    parser.add_argument("--batch-size", type=int, default=None)
    parser.add_argument("--lr", type=float, default=None)
    parser.add_argument("--eval-batches", type=int, default=None)
    parser.add_argument("--k", type=int, default=None, help="dimensión de proyección de LMI")
    parser.add_argument("--latent", choices=["ksg", "dv"], default=None, help="estimador latente de LMI")
    parser.add_argument("--neighbors", type=int, default=None, help="vecinos de KSG")
    parser.add_argument("--seeds", type=int, default=1)
    pooling_flag(parser)
    parser.set_defaults(handler=cmd_mi)


def estimator_options(args, name: str) -> Dict[str, Any]:
    common = {"steps": args.steps, "batch_size": args.batch_size, "lr": args.lr, "eval_batches": args.eval_batches}
    if name == "mine":
        options = common
    elif name == "lmi":
        options = {**common, "k": args.k, "latent_estimator": args.latent, "neighbors": args.neighbors}
    else:
        options = {"neighbors": args.neighbors}
    return {k: v for k, v in options.items() if v is not None}


def cmd_mi(args) -> int:
    names = [n.strip() for n in args.estimator.split(",") if n.strip()]
    unknown = [n for n in names if n not in ESTIMATORS]
    if unknown or not names:
        raise UsageError(f"estimadores desconocidos {unknown}; válidos: {sorted(ESTIMATORS)}",
                         {"unknown": unknown, "valid": sorted(ESTIMATORS)})
    adapted, expert = load_pair(args.manifest, args.adapted_role, args.expert_role)
    options = {name: estimator_options(args, name) for name in names}
    report = evaluate_pathways(adapted, expert, names, experiment=adapted.source, seeds=seed_list(args),
                               pooling=args.pooling, estimator_options=options)
    emit_report(args, report)
    if report.all_failed():
        codes = {m.diagnostics.get("exit_code", 4) for m in report.metrics}
        return codes.pop() if len(codes) == 1 else 4
    return 0
