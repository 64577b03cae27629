"""
Utilidades compartidas por los comandos: flags globales, salida y carga de datos
"""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple

from api.schemas import TrainExperiment
from services.config import POOLING, default_jobs
from services.errors import UsageError
from services.featio import FeatureSet, Manifest, load_manifest
from services.reporting import MetricReport
from services.run_tracker import write_atomic
from services.training import TrainingData

logger = logging.getLogger(__name__)


def global_flags() -> argparse.ArgumentParser:
    """Flags comunes a todos los subcomandos"""
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--seed", type=int, default=None, help="semilla base (por defecto 0)")
    parent.add_argument("--out", default=None, help="archivo o directorio de salida")
    parent.add_argument("--json", action="store_true", help="un único documento JSON en stdout")
    parent.add_argument("--jobs", type=int, default=None, help="workers para barridos")
    parent.add_argument("-v", "--verbose", action="store_true", help="logging DEBUG")
    return parent


def seed_of(args) -> int:
    return 0 if args.seed is None else args.seed


def jobs_of(args) -> int:
    return max(1, args.jobs) if args.jobs else default_jobs()


def seed_list(args, count: Optional[int] = None) -> List[int]:
    count = count if count is not None else getattr(args, "seeds", 1)
    if count < 1:
        raise UsageError(f"--seeds debe ser ≥ 1 (recibido {count})")
    base = seed_of(args)
    return [base + i for i in range(count)]


def parse_int_list(text: str, flag: str) -> List[int]:
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"{flag}: lista de enteros inválida '{text}'")
    if not values:
        raise UsageError(f"{flag}: lista vacía")
    return values


def emit_json(payload: str) -> None:
    sys.stdout.write(payload.rstrip("\n") + "\n")
    sys.stdout.flush()


def emit_report(args, report: MetricReport) -> None:
    """--json: el reporte en stdout; --out: archivo; si no, resumen legible"""
    text = report.model_dump_json(indent=2)
    if args.out:
        write_atomic(args.out, text + "\n")
        logger.info(f"reporte escrito en {args.out}")
    if args.json:
        emit_json(text)
    else:
        print_report(report)


def print_report(report: MetricReport) -> None:
    print(f"experimento: {report.experiment}  semillas: {report.seeds}")
    for m in report.metrics:
        if m.status == "ok":
            agg = (report.aggregate or {}).get(m.name)
            spread = f" ± {agg.std:.4g}" if agg is not None and agg.std is not None else ""
            print(f"  {m.name:<10} {m.value:.6g}{spread} {m.units}")
        else:
            print(f"  {m.name:<10} FALLÓ: {m.diagnostics.get('message', m.diagnostics)}")


def require_roles(manifest: Manifest, roles: Iterable[str]) -> None:
    missing = [r for r in roles if r not in manifest.roles()]
    if missing:
        raise UsageError(f"el manifiesto no tiene los roles {missing} (roles: {manifest.roles()})",
                         {"missing": missing, "roles": manifest.roles()})


def load_pair(manifest_path: str, adapted_role: str, expert_role: str) -> Tuple[FeatureSet, FeatureSet]:
    manifest = load_manifest(manifest_path)
    require_roles(manifest, [adapted_role, expert_role])
    return manifest.load_role(adapted_role), manifest.load_role(expert_role)


def load_training_data(exp: TrainExperiment) -> TrainingData:
    manifest = load_manifest(exp.data.manifest)
    roles = [exp.data.encoder_role, exp.data.expert_role]
    if exp.data.targets_role:
        roles.append(exp.data.targets_role)
    require_roles(manifest, roles)
    return TrainingData(
        encoder=manifest.load_role(exp.data.encoder_role),
        expert=manifest.load_role(exp.data.expert_role),
        targets=manifest.load_role(exp.data.targets_role) if exp.data.targets_role else None,
    )


def neck_dims(data: TrainingData) -> Dict[str, int]:
    tokens = data.encoder.tokens or data.expert.tokens or 1
    return {"d_in": data.encoder.dim, "d_out": data.expert.dim, "tokens": tokens}


def pooling_flag(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--pooling", choices=["mean", "flatten"], default=POOLING,
                        help="reducción del eje de tokens")


def write_json(path: Path, payload) -> Path:
    return write_atomic(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")
