"""
featprobe train / cross: adaptación directa y cruzada a partir de un archivo de experimento
"""
import logging

from api.commands.common import emit_json, load_training_data, neck_dims
from api.schemas import CrossExperiment, TrainExperiment, load_experiment
from services.neck import load_checkpoint
from services.run_tracker import get_run_tracker
from services.training import RunRecord, train_cross_neck, train_neck

logger = logging.getLogger(__name__)


def _add_overrides(parser) -> None:
    parser.add_argument("config", help="archivo TOML o JSON del experimento")
    parser.add_argument("--steps", type=int, default=None, help="sobrescribe train.total_steps")
    parser.add_argument("--layers", type=int, default=None, help="sobrescribe neck.layers")
    parser.add_argument("--no-distill", action="store_true", help="desactiva la destilación")


def register(subparsers, parents) -> None:
    train = subparsers.add_parser("train", parents=parents, help="entrena un neck (adaptación directa)")
    _add_overrides(train)
    train.set_defaults(handler=cmd_train)

    cross = subparsers.add_parser("cross", parents=parents, help="entrena un segundo neck sobre un neck congelado")
    _add_overrides(cross)
    cross.set_defaults(handler=cmd_cross)


def overrides_from(args):
    overrides = {
        "train.seed": args.seed,
        "train.total_steps": args.steps,
        "neck.layers": args.layers,
    }
    if args.no_distill:
        overrides["train.distillation"] = False
    return overrides


def _emit(args, record: RunRecord) -> None:
    if args.json:
        emit_json(record.model_dump_json(indent=2))
        return
    print(f"corrida: {record.tag}  semilla {record.seed}")
    print(f"  pérdida de tarea reservada: {record.heldout_loss:.6g}")
    if record.delta_pct is not None:
        print(f"  cambio frente a la adaptación directa: {record.delta_pct:+.2f}%")
    if record.checkpoint:
        print(f"  checkpoint: {record.checkpoint}")
    print(f"  hash: {record.digest()}")


def cmd_train(args) -> int:
    exp = load_experiment(args.config, TrainExperiment, overrides_from(args))
    data = load_training_data(exp)
    neck_cfg = exp.neck.resolve(**neck_dims(data))
    train_cfg = exp.train.model_copy(update={"experiment": exp.experiment})
    record, _ = train_neck(train_cfg, neck_cfg, data, exp.task, tracker=get_run_tracker(args.out))
    _emit(args, record)
    return 0


def cmd_cross(args) -> int:
    exp = load_experiment(args.config, CrossExperiment, overrides_from(args))
    data = load_training_data(exp)
    neck1 = load_checkpoint(exp.neck1_checkpoint)
    dims = neck_dims(data)
    dims["d_in"] = neck1.config.d_out
    neck2_cfg = exp.neck.resolve(**dims)
    tracker = get_run_tracker(args.out)
    direct = tracker.load_record(exp.direct_record) if exp.direct_record else None
    train_cfg = exp.train.model_copy(update={"experiment": exp.experiment})
    record, _ = train_cross_neck(neck1, train_cfg, neck2_cfg, data, exp.task,
                                 upstream_task=exp.upstream_task, direct=direct, tracker=tracker)
    _emit(args, record)
    return 0
