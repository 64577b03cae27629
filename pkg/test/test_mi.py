"""
Pruebas de los estimadores de información mutua: KSG, MINE y LMI
"""
import math

import numpy as np
import pytest
from pydantic import ValidationError

from services.errors import ConfigError, EstimationError, InsufficientDataError, UsageError
from services.featio import SynthSpec, synth_gaussian_pair
from services.mi import LmiConfig, MineConfig, ksg_estimate, lmi_estimate, mine_estimate, run_estimator
from services.mi.dv import dv_bound, holdout_split, standardize

TRUE_MI_RHO09 = -0.5 * math.log(1 - 0.81)


def _lifted_pair(n: int, dim: int, target_mi: float, seed: int):
    """Par de 4 dimensiones con MI conocida, elevado con mapas lineales fijos a `dim` dimensiones"""
    x, y, true_mi = synth_gaussian_pair(SynthSpec(dx=4, dy=4, target_mi=target_mi, seed=seed), n)
    r = np.random.default_rng(seed + 1000)
    return x.data @ r.normal(size=(4, dim)), y.data @ r.normal(size=(4, dim)), true_mi


# ---- KSG ----

def test_ksg_independiente(rng):
    assert abs(ksg_estimate(rng.normal(size=(5000, 1)), rng.normal(size=(5000, 1)))) < 0.05


def test_ksg_correlacion_conocida(correlated_pair):
    x, y, true_mi = correlated_pair
    assert ksg_estimate(x, y) == pytest.approx(true_mi, rel=0.10)
    assert true_mi == pytest.approx(0.83, abs=1e-2)


def test_ksg_empates_finitos(rng):
    x = rng.integers(0, 4, size=(500, 1)).astype(float)
    y = x + rng.integers(0, 2, size=(500, 1))
    assert math.isfinite(ksg_estimate(x, y))


def test_ksg_guardas_de_dimension_y_muestras(rng):
    with pytest.raises(UsageError) as info:
        ksg_estimate(rng.normal(size=(200, 64)), rng.normal(size=(200, 64)))
    assert info.value.exit_code == 2
    with pytest.raises(UsageError):
        ksg_estimate(rng.normal(size=(50, 1)), rng.normal(size=(50, 1)))


def test_ksg_invariante_a_transformaciones_monotonas(correlated_pair):
    x, y, _ = correlated_pair
    base = ksg_estimate(x, y)
    warped = ksg_estimate(np.exp(0.5 * x.data), np.sinh(0.5 * y.data))
    assert abs(warped - base) <= 0.05


def test_desigualdad_de_procesamiento_de_datos():
    """Una función determinista de Y no puede aumentar la información sobre X"""
    x, y, _ = synth_gaussian_pair(SynthSpec(dx=1, dy=1, rho=0.9, seed=12), 5000)
    full = ksg_estimate(x, y)
    assert ksg_estimate(x, y.data ** 2) <= full + 0.15
    assert ksg_estimate(x, np.tanh(y.data)) <= full + 0.15
    x4, y4, _ = synth_gaussian_pair(SynthSpec(dx=4, dy=4, target_mi=1.0, seed=13), 5000)
    assert ksg_estimate(x4, y4.data[:, :2]) <= ksg_estimate(x4, y4) + 0.15


# ---- Piezas DV ----

def test_cota_dv_constante():
    assert dv_bound(np.full(10, 2.0), np.zeros(10)) == pytest.approx(2.0)


def test_split_y_estandarizado(rng):
    train, held = holdout_split(100, 0.2, rng)
    assert len(held) == 20 and len(train) == 80
    assert not set(train) & set(held)
    data = rng.normal(loc=5.0, scale=3.0, size=(80, 2))
    (scaled,) = standardize(data)
    assert np.allclose(scaled.mean(axis=0), 0.0) and np.allclose(scaled.std(axis=0), 1.0)


def test_configuraciones_invalidas(rng):
    with pytest.raises(ValidationError):
        MineConfig(steps=10, eval_batches=20)
    x = rng.normal(size=(100, 1))
    with pytest.raises(InsufficientDataError):
        mine_estimate(x, x, MineConfig())
    with pytest.raises(ConfigError):
        lmi_estimate(rng.normal(size=(2000, 3)), rng.normal(size=(2000, 3)), LmiConfig(k=4))


def test_mine_divergencia_adjunta_curva():
    x, y, _ = synth_gaussian_pair(SynthSpec(dx=1, dy=1, rho=0.99, seed=2), 1000)
    cfg = MineConfig(hidden=[16, 16], lr=5e-3, batch_size=64, steps=300, eval_interval=10,
                     eval_batches=5, divergence_limit=0.05)
    with pytest.raises(EstimationError) as info:
        mine_estimate(x, y, cfg)
    assert info.value.curve
    assert info.value.exit_code == 4


def test_registro_de_estimadores(correlated_pair):
    x, y, _ = correlated_pair
    estimate = run_estimator("ksg", x, y, {"neighbors": 3}, seed=4)
    assert estimate.estimator == "ksg" and estimate.units == "nats"
    assert estimate.value >= 0 and estimate.seed == 4
    with pytest.raises(UsageError):
        run_estimator("infonce", x, y)


def test_mine_corto_determinista(correlated_pair):
    x, y, _ = correlated_pair
    cfg = MineConfig(hidden=[16], batch_size=64, steps=60, eval_interval=20, eval_batches=5, seed=1)
    a, b = mine_estimate(x, y, cfg), mine_estimate(x, y, cfg)
    assert a.curve == b.curve and a.value == b.value
    assert a.n_train + a.n_eval == x.n


# ---- Calibración (lenta) ----

@pytest.mark.slow
def test_mine_correlacion_conocida():
    x, y, true_mi = synth_gaussian_pair(SynthSpec(dx=1, dy=1, rho=0.9, seed=21), 10_000)
    assert mine_estimate(x, y, MineConfig(seed=0)).value == pytest.approx(true_mi, rel=0.15)


@pytest.mark.slow
def test_mine_mi_objetivo_d4():
    x, y, true_mi = synth_gaussian_pair(SynthSpec(dx=4, dy=4, target_mi=1.0, seed=22), 10_000)
    assert mine_estimate(x, y, MineConfig(seed=0)).value == pytest.approx(true_mi, rel=0.15)


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(10))
def test_mine_independiente_d4(seed):
    r = np.random.default_rng(700 + seed)
    x, y = r.normal(size=(10_000, 4)), r.normal(size=(10_000, 4))
    assert mine_estimate(x, y, MineConfig(seed=seed)).value <= 0.05


@pytest.mark.slow
def test_lmi_alta_dimension_elevada():
    x, y, true_mi = _lifted_pair(10_000, 64, 1.0, seed=31)
    estimate = lmi_estimate(x, y, LmiConfig(k=4, seed=0))
    assert estimate.latent_estimator == "ksg"
    assert estimate.value == pytest.approx(true_mi, rel=0.25)


@pytest.mark.slow
def test_lmi_independiente_alta_dimension(rng):
    x, y = rng.normal(size=(10_000, 64)), rng.normal(size=(10_000, 64))
    assert lmi_estimate(x, y, LmiConfig(k=4, seed=0)).value <= 0.1


@pytest.mark.slow
def test_lmi_no_peor_que_mine_con_rotacion_exacta():
    """Y es una rotación exacta del subespacio informativo de X, sin ruido"""
    r = np.random.default_rng(41)
    informative = r.normal(size=(10_000, 2))
    x = np.concatenate([informative, r.normal(size=(10_000, 14))], axis=1)
    angle = 0.7
    rotation = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
    y = np.concatenate([informative @ rotation.T, r.normal(size=(10_000, 14))], axis=1)
    lmi = lmi_estimate(x, y, LmiConfig(k=4, seed=0)).value
    mine = mine_estimate(x, y, MineConfig(seed=0)).value
    assert lmi >= mine - 0.2
