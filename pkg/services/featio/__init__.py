from services.featio.features import FeatureSet, check_paired, pool_tokens
from services.featio.manifest import Manifest, ManifestEntry, load_manifest, save_manifest
from services.featio.npy import load_feature_file, read_feature_header, save_feature_file
from services.featio.synth import SynthPipeline, SynthSpec, synth_gaussian_pair, synth_task_pipeline

__all__ = [
    "FeatureSet",
    "check_paired",
    "pool_tokens",
    "Manifest",
    "ManifestEntry",
    "load_manifest",
    "save_manifest",
    "load_feature_file",
    "save_feature_file",
    "read_feature_header",
    "SynthSpec",
    "SynthPipeline",
    "synth_gaussian_pair",
    "synth_task_pipeline",
]
