"""
featprobe gradcheck: batería de diferencias finitas de todas las operaciones y del neck
"""
import json
import logging

from api.commands.common import emit_json, seed_of
from services.autodiff.gradcheck import CHECKS, run_gradcheck
from services.errors import UsageError

logger = logging.getLogger(__name__)


def register(subparsers, parents) -> None:
    parser = subparsers.add_parser("gradcheck", parents=parents, help="verificación de gradientes")
    parser.add_argument("--seeds", type=int, default=20, help="semillas aleatorias por operación")
    parser.add_argument("--tolerance", type=float, default=1e-4, help="error relativo máximo")
    parser.add_argument("--only", default=None, help=f"subconjunto de {','.join(CHECKS)}")
    parser.set_defaults(handler=cmd_gradcheck)


def cmd_gradcheck(args) -> int:
    only = [n.strip() for n in args.only.split(",")] if args.only else None
    if only:
        unknown = [n for n in only if n not in CHECKS]
        if unknown:
            raise UsageError(f"chequeos desconocidos {unknown}; válidos: {sorted(CHECKS)}")
    report = run_gradcheck(seeds=args.seeds, tolerance=args.tolerance, only=only, base_seed=seed_of(args))
    if args.json:
        emit_json(json.dumps(report.to_dict(), sort_keys=True))
    else:
        for r in report.results:
            mark = "ok" if r.passed else "FALLÓ"
            print(f"  {r.name:<12} {r.max_rel_err:.3e}  {mark}")
        print("gradcheck: " + ("todo correcto" if report.passed else f"fallaron {', '.join(report.failed)}"))
    return 0 if report.passed else 1
