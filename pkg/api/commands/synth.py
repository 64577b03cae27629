"""
featprobe synth {gaussian, pipeline}: features sintéticas + manifiesto + verdad de referencia
"""
import json
import logging
from pathlib import Path

from api.commands.common import emit_json, seed_of, write_json
from services.config import runtime_environment
from services.featio import Manifest, ManifestEntry, SynthSpec, save_feature_file, save_manifest
from services.featio.synth import gaussian_covariance, synth_gaussian_pair, synth_task_pipeline

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
TRUTH_NAME = "truth.json"


def register(subparsers, parents) -> None:
    parser = subparsers.add_parser("synth", help="genera features sintéticas")
    kinds = parser.add_subparsers(dest="kind", required=True)

    gaussian = kinds.add_parser("gaussian", parents=parents, help="par gaussiano con MI conocida")
    gaussian.add_argument("--dx", type=int, default=1)
    gaussian.add_argument("--dy", type=int, default=1)
    gaussian.add_argument("--mi", type=float, default=None, help="MI objetivo en nats")
    gaussian.add_argument("--rho", type=float, default=None, help="correlación por par de coordenadas")
    gaussian.add_argument("--n", type=int, default=10000)
    gaussian.add_argument("--dtype", choices=["f32", "f64"], default="f64")
    gaussian.add_argument("--force", action="store_true", help="sobrescribir archivos existentes")
    gaussian.set_defaults(handler=cmd_synth)

    pipeline = kinds.add_parser("pipeline", parents=parents, help="pipeline encoder/experto/tarea")
    pipeline.add_argument("--latent-dim", type=int, default=8)
    pipeline.add_argument("--tokens", type=int, default=4)
    pipeline.add_argument("--encoder-dim", type=int, default=16)
    pipeline.add_argument("--expert-dim", type=int, default=8)
    pipeline.add_argument("--rank1", type=int, default=4)
    pipeline.add_argument("--rank2", type=int, default=4)
    pipeline.add_argument("--overlap", type=float, default=0.0)
    pipeline.add_argument("--noise", type=float, default=0.0)
    pipeline.add_argument("--encoder-gain", type=float, default=0.5)
    pipeline.add_argument("--token-view", type=int, default=None)
    pipeline.add_argument("--specialized", action="store_true", help="añade el rol encoder_specialized")
    pipeline.add_argument("--n", type=int, default=4000)
    pipeline.add_argument("--dtype", choices=["f32", "f64"], default="f64")
    pipeline.add_argument("--force", action="store_true", help="sobrescribir archivos existentes")
    pipeline.set_defaults(handler=cmd_synth)


def cmd_synth(args) -> int:
    seed = seed_of(args)
    out = Path(args.out or f"synth_{args.kind}_{seed}")
    experiment = out.name
    if args.kind == "gaussian":
        spec = SynthSpec(dx=args.dx, dy=args.dy, target_mi=args.mi, rho=args.rho, seed=seed)
        x, y, true_mi = synth_gaussian_pair(spec, args.n)
        features = {"adapted": x, "expert": y}
        truth = {"kind": "gaussian", "true_mi": true_mi, "units": "nats", **runtime_environment(),
                 "covariance": gaussian_covariance(spec).tolist(), "spec": spec.model_dump()}
    else:
        spec = SynthSpec(
            latent_dim=args.latent_dim, tokens=args.tokens, encoder_dim=args.encoder_dim,
            expert_dim=args.expert_dim, rank1=args.rank1, rank2=args.rank2, overlap=args.overlap,
            noise=args.noise, encoder_gain=args.encoder_gain, token_view=args.token_view,
            specialized=args.specialized, seed=seed,
        )
        pipeline = synth_task_pipeline(spec, args.n)
        features = pipeline.features
        truth = {"kind": "pipeline", **pipeline.truth, "spec": spec.model_dump(), **runtime_environment()}

    entries = []
    for role, fs in features.items():
        path = out / f"{role}.npy"
        save_feature_file(fs.with_data(fs.data, dtype=args.dtype), path, overwrite=args.force)
        entries.append(ManifestEntry(role=role, path=path.name, shape=list(fs.shape)))
    manifest = Manifest(experiment=experiment, seed=seed, entries=entries)
    save_manifest(manifest, out / MANIFEST_NAME)
    write_json(out / TRUTH_NAME, truth)
    logger.info(f"synth {args.kind}: {len(entries)} roles escritos en {out}")

    summary = {"manifest": str(out / MANIFEST_NAME), "truth": truth, "roles": [e.role for e in entries]}
    if args.json:
        emit_json(json.dumps(summary, sort_keys=True))
    else:
        print(f"manifiesto: {out / MANIFEST_NAME}")
        for e in entries:
            print(f"  {e.role:<20} {tuple(e.shape)}")
        if "true_mi" in truth:
            print(f"MI verdadera: {truth['true_mi']:.6f} nats")
    return 0
