"""
Fixtures compartidas: generadores sembrados y datos sintéticos pequeños en disco
"""
import numpy as np
import pytest

from api.main import main
from services.featio import SynthSpec, synth_gaussian_pair, synth_task_pipeline


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def correlated_pair():
    """Par 1D con ρ = 0.9 (MI verdadera ≈ 0.8304 nats)"""
    return synth_gaussian_pair(SynthSpec(dx=1, dy=1, rho=0.9, seed=3), 5000)


@pytest.fixture
def small_pipeline():
    return synth_task_pipeline(SynthSpec(latent_dim=6, tokens=3, encoder_dim=8, expert_dim=6,
                                         rank1=3, rank2=3, encoder_gain=0.1, seed=5), 240)


@pytest.fixture
def pipeline_dir(tmp_path):
    """Pipeline sintético escrito con la CLI: manifiesto + .npy por rol"""
    out = tmp_path / "pipeline"
    code = main(["synth", "pipeline", "--out", str(out), "--n", "300", "--latent-dim", "6",
                 "--tokens", "3", "--encoder-dim", "8", "--expert-dim", "6", "--rank1", "3",
                 "--rank2", "3", "--encoder-gain", "0.1", "--seed", "0"])
    assert code == 0
    return out


@pytest.fixture
def identical_dir(tmp_path):
    """Manifiesto cuyos roles adapted y expert apuntan al mismo archivo"""
    import json

    from services.featio import FeatureSet, save_feature_file

    out = tmp_path / "identical"
    data = np.random.default_rng(9).normal(size=(400, 5))
    save_feature_file(FeatureSet(data, role="adapted", name="x"), out / "x.npy")
    manifest = {"experiment": "identical", "seed": 0, "entries": [
        {"role": "adapted", "path": "x.npy", "shape": [400, 5]},
        {"role": "expert", "path": "x.npy", "shape": [400, 5]},
    ]}
    (out / "manifest.json").write_text(json.dumps(manifest), encoding="utf-8")
    return out
