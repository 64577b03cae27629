"""
Pruebas de E/S de features (NPY, manifiestos) y de los generadores sintéticos
"""
import json
import math

import numpy as np
import pytest

from services.errors import (
    DataError,
    DimensionError,
    FeatureIOError,
    FormatError,
    ManifestError,
    SpecError,
    UsageError,
)
from services.featio import (
    FeatureSet,
    Manifest,
    ManifestEntry,
    SynthSpec,
    check_paired,
    load_feature_file,
    load_manifest,
    pool_tokens,
    read_feature_header,
    save_feature_file,
    save_manifest,
    synth_gaussian_pair,
    synth_task_pipeline,
)
from services.featio.manifest import feature_role
from services.featio.synth import gaussian_covariance, gaussian_mi


# ---- NPY ----

def test_npy_ida_y_vuelta_exacta(tmp_path, rng):
    data = rng.normal(size=(20, 5))
    path = save_feature_file(FeatureSet(data, role="expert", name="f"), tmp_path / "f.npy")
    loaded = load_feature_file(path, role="expert")
    assert np.array_equal(loaded.data, data)
    assert loaded.dtype == "f64"
    # numpy también debe poder leer lo que escribimos
    assert np.array_equal(np.load(path), data)


def test_npy_f32_y_tokens(tmp_path, rng):
    data = rng.normal(size=(6, 3, 4))
    path = save_feature_file(FeatureSet(data, dtype="f32"), tmp_path / "t.npy")
    assert read_feature_header(path) == ("f32", (6, 3, 4))
    loaded = load_feature_file(path)
    assert loaded.tokens == 3 and loaded.dim == 4
    assert np.array_equal(loaded.data, data.astype("<f4").astype(np.float64))


def test_npy_lee_archivos_de_numpy(tmp_path, rng):
    data = rng.normal(size=(4, 2))
    np.save(tmp_path / "np.npy", data)
    assert np.array_equal(load_feature_file(tmp_path / "np.npy").data, data)


def test_npy_rechaza_fortran_order(tmp_path):
    np.save(tmp_path / "f.npy", np.asfortranarray(np.ones((3, 4))))
    with pytest.raises(FormatError) as info:
        load_feature_file(tmp_path / "f.npy")
    assert info.value.field == "fortran_order"


def test_npy_rechaza_descr_entero(tmp_path):
    np.save(tmp_path / "i.npy", np.ones((3, 4), dtype="<i4"))
    with pytest.raises(FormatError) as info:
        load_feature_file(tmp_path / "i.npy")
    assert info.value.field == "descr"


def test_npy_rechaza_forma_1d_y_truncado(tmp_path, rng):
    np.save(tmp_path / "v.npy", np.ones(5))
    with pytest.raises(FormatError) as info:
        load_feature_file(tmp_path / "v.npy")
    assert info.value.field == "shape"

    path = save_feature_file(FeatureSet(rng.normal(size=(10, 3))), tmp_path / "cut.npy")
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(FormatError):
        load_feature_file(path)


def test_npy_magic_invalido(tmp_path):
    (tmp_path / "bad.npy").write_bytes(b"not a numpy file at all")
    with pytest.raises(FormatError) as info:
        load_feature_file(tmp_path / "bad.npy")
    assert info.value.field == "magic"


def test_npy_valor_no_finito_con_indice(tmp_path):
    data = np.ones((3, 2))
    data[1, 1] = np.nan
    np.save(tmp_path / "nan.npy", data)
    with pytest.raises(DataError) as info:
        load_feature_file(tmp_path / "nan.npy")
    assert info.value.index == (1, 1)


def test_npy_no_sobrescribe(tmp_path, rng):
    fs = FeatureSet(rng.normal(size=(4, 2)))
    save_feature_file(fs, tmp_path / "a.npy")
    with pytest.raises(FeatureIOError):
        save_feature_file(fs, tmp_path / "a.npy")
    save_feature_file(fs, tmp_path / "a.npy", overwrite=True)


# ---- FeatureSet ----

def test_featureset_validaciones():
    with pytest.raises(DimensionError):
        FeatureSet(np.ones(4))
    with pytest.raises(DataError):
        FeatureSet(np.array([[1.0, np.inf], [0.0, 0.0]]))
    with pytest.raises(UsageError):
        FeatureSet(np.ones((2, 2)), role="desconocido")


def test_pooling_y_emparejado(rng):
    fs = FeatureSet(rng.normal(size=(5, 3, 2)))
    assert pool_tokens(fs, "mean").shape == (5, 2)
    assert pool_tokens(fs, "flatten").shape == (15, 2)
    with pytest.raises(DimensionError):
        check_paired(fs, FeatureSet(rng.normal(size=(4, 2))))


# ---- Manifiestos ----

def _write_manifest(tmp_path, rng, declared_shape=None):
    save_feature_file(FeatureSet(rng.normal(size=(8, 3)), name="enc"), tmp_path / "enc.npy")
    manifest = Manifest(experiment="m", entries=[
        ManifestEntry(role="encoder", path="enc.npy", shape=declared_shape or [8, 3]),
    ])
    return save_manifest(manifest, tmp_path / "manifest.json")


def test_manifiesto_carga_roles(tmp_path, rng):
    manifest = load_manifest(_write_manifest(tmp_path, rng))
    assert manifest.roles() == ["encoder"]
    assert manifest.load_role("encoder").role == "encoder"
    with pytest.raises(ManifestError):
        manifest.entry("expert1")
    assert feature_role("expert1") == "expert"
    assert feature_role("otra_cosa") == "latent"


def test_manifiesto_forma_declarada_distinta(tmp_path, rng):
    path = _write_manifest(tmp_path, rng, declared_shape=[8, 4])
    with pytest.raises(ManifestError):
        load_manifest(path)


def test_manifiesto_ruta_inexistente(tmp_path):
    (tmp_path / "manifest.json").write_text(json.dumps({
        "experiment": "m", "entries": [{"role": "encoder", "path": "missing.npy"}],
    }), encoding="utf-8")
    with pytest.raises(ManifestError):
        load_manifest(tmp_path / "manifest.json")


# ---- Par gaussiano ----

def test_gaussiano_independiente_y_correlacion():
    assert gaussian_mi(gaussian_covariance(SynthSpec(dx=2, dy=3)), 2) == 0.0
    _, _, mi = synth_gaussian_pair(SynthSpec(dx=1, dy=1, rho=0.9), 10)
    assert mi == pytest.approx(-0.5 * math.log(1 - 0.81), abs=1e-12)
    assert mi == pytest.approx(0.8304, abs=1e-4)


def test_gaussiano_mi_objetivo_y_covarianza_muestral():
    spec = SynthSpec(dx=4, dy=4, target_mi=1.0, seed=7)
    x, y, mi = synth_gaussian_pair(spec, 100_000)
    assert mi == pytest.approx(1.0, abs=1e-9)
    sample = np.cov(np.concatenate([x.data, y.data], axis=1), rowvar=False)
    assert np.max(np.abs(sample - gaussian_covariance(spec))) < 0.02


def test_gaussiano_covarianza_no_definida_positiva():
    with pytest.raises(SpecError):
        synth_gaussian_pair(SynthSpec(dx=1, dy=1, covariance=[[1.0, 2.0], [2.0, 1.0]]), 10)


def test_gaussiano_determinista():
    a = synth_gaussian_pair(SynthSpec(dx=2, dy=2, rho=0.5, seed=1), 50)
    b = synth_gaussian_pair(SynthSpec(dx=2, dy=2, rho=0.5, seed=1), 50)
    assert np.array_equal(a[0].data, b[0].data) and np.array_equal(a[1].data, b[1].data)


# ---- Pipeline de tareas ----

def test_pipeline_sin_solapamiento_ortogonal():
    p = synth_task_pipeline(SynthSpec(overlap=0.0, seed=2), 50)
    assert np.allclose(p.b1 @ p.b2.T, 0.0, atol=1e-12)
    assert p.shared_rank == 0
    assert set(p.features) == {"encoder", "expert1", "expert2", "latent"}


def test_pipeline_solapamiento_total_mismo_subespacio():
    p = synth_task_pipeline(SynthSpec(overlap=1.0, seed=2), 50)
    assert p.truth["subspace_overlap"] == 1.0
    assert np.linalg.matrix_rank(np.vstack([p.b1, p.b2]), tol=1e-9) == 4


def test_pipeline_sin_ruido_recuperable_linealmente():
    p = synth_task_pipeline(SynthSpec(noise=0.0, seed=4), 200)
    z = p.features["latent"].data
    f1 = p.features["expert1"].data[:, 0, :]
    coef, *_ = np.linalg.lstsq(z, f1, rcond=None)
    assert np.max(np.abs(z @ coef - f1)) < 1e-10


def test_pipeline_dimensiones_infactibles():
    with pytest.raises(SpecError):
        synth_task_pipeline(SynthSpec(latent_dim=8, rank1=6, rank2=4, overlap=0.0), 10)


def test_pipeline_especializado_y_determinista():
    spec = SynthSpec(specialized=True, token_view=2, seed=8)
    a, b = synth_task_pipeline(spec, 30), synth_task_pipeline(spec, 30)
    assert "encoder_specialized" in a.features
    for role in a.features:
        assert np.array_equal(a.features[role].data, b.features[role].data)
