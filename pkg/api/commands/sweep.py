"""
featprobe sweep: barrido de capas del neck × semillas con tabla de curvas CSV
"""
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Dict, List

from api.commands.common import emit_json, jobs_of, load_training_data, neck_dims, parse_int_list, seed_of
from api.schemas import SweepExperiment, load_experiment
from services.config import RUNS_DIR
from services.errors import FeatprobeError, TrainingAbort
from services.reporting import CurveTable
from services.run_tracker import get_run_tracker, write_atomic
from services.training import train_neck

logger = logging.getLogger(__name__)

CURVE_NAME = "curve.csv"
NORMALIZED_NAME = "curve_normalized.csv"


def register(subparsers, parents) -> None:
    parser = subparsers.add_parser("sweep", parents=parents, help="barrido de tamaño de neck")
    parser.add_argument("config", help="archivo TOML o JSON del experimento base")
    parser.add_argument("--layers", default=None, help="valores de capas, p. ej. 2,4,6")
    parser.add_argument("--seeds", type=int, default=None, help="semillas por celda")
    parser.add_argument("--steps", type=int, default=None, help="sobrescribe train.total_steps")
    parser.add_argument("--normalize", action="store_true", help=f"escribe también {NORMALIZED_NAME}")
    parser.set_defaults(handler=cmd_sweep)


def run_cell(payload: Dict[str, Any]) -> Dict[str, Any]:
    """Una celda (capas, semilla); se ejecuta en un proceso del pool"""
    layers, seed = payload["layers"], payload["seed"]
    try:
        exp = SweepExperiment(**payload["experiment"])
        data = load_training_data(exp)
        neck_cfg = exp.neck.model_copy(update={"layers": layers}).resolve(**neck_dims(data))
        train_cfg = exp.train.model_copy(update={"experiment": exp.experiment, "seed": seed})
        record, params = train_neck(train_cfg, neck_cfg, data, exp.task)
        get_run_tracker(payload["runs_dir"]).record_run(record, params, subdir=neck_cfg.variant_name())
    except FeatprobeError as e:
        logger.error(f"celda L={layers} semilla={seed} falló: {e.message}")
        return {"layers": layers, "seed": seed, "status": "failed", "error": e.message,
                "exit_code": e.exit_code}
    values = {name: record.final[name] for name in exp.sweep.metrics if name in record.final}
    values["final_loss"] = record.breakdowns[-1].total
    return {"layers": layers, "seed": seed, "status": "ok", "values": values, "digest": record.digest(),
            "parameters": params.count()}


def cmd_sweep(args) -> int:
    overrides = {"train.total_steps": args.steps}
    exp = load_experiment(args.config, SweepExperiment, overrides)
    values = parse_int_list(args.layers, "--layers") if args.layers else exp.sweep.values
    seeds = [seed_of(args) + i for i in range(args.seeds or exp.sweep.seeds)]
    runs_dir = args.out or RUNS_DIR
    payloads = [{"experiment": exp.model_dump(), "layers": layers, "seed": seed, "runs_dir": str(runs_dir)}
                for layers in values for seed in seeds]

    jobs = min(jobs_of(args), len(payloads))
    logger.info(f"barrido '{exp.experiment}': capas {values} × semillas {seeds} con {jobs} workers")
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run_cell, payloads))
    else:
        results = [run_cell(p) for p in payloads]

    completed = [r for r in results if r["status"] == "ok"]
    samples: Dict[float, Dict[str, List[float]]] = {}
    for r in completed:
        cell = samples.setdefault(float(r["layers"]), {})
        for name, value in r["values"].items():
            cell.setdefault(name, []).append(float(value))
    table = CurveTable.from_samples("layers", samples)

    out_dir = Path(runs_dir) / exp.experiment
    write_atomic(out_dir / CURVE_NAME, table.to_csv())
    if args.normalize:
        write_atomic(out_dir / NORMALIZED_NAME, table.normalized().to_csv())
    summary = {"experiment": exp.experiment, "curve": str(out_dir / CURVE_NAME), "cells": results}
    write_atomic(out_dir / "sweep.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")

    if args.json:
        emit_json(json.dumps(summary, sort_keys=True))
    else:
        print(table.to_csv(), end="")
        failed = [r for r in results if r["status"] == "failed"]
        if failed:
            print(f"{len(failed)} celdas fallidas de {len(results)}")
    if not completed:
        codes = {r["exit_code"] for r in results}
        return codes.pop() if len(codes) == 1 else TrainingAbort.exit_code
    return 0
