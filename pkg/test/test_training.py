"""
Pruebas del objetivo de adaptación, las cabezas congeladas, el entrenamiento
directo y cruzado, el registro de corridas y los reportes
"""
import numpy as np
import pytest
from pydantic import ValidationError

from services.autodiff import Tensor
from services.errors import ConfigError, InvariantViolation, NumericError, TrainingAbort, UsageError
from services.featio import FeatureSet, SynthSpec, synth_task_pipeline
from services.neck import NeckConfig, neck_init
from services.reporting import (
    CURVE_HEADER,
    CurveTable,
    MetricEntry,
    aggregate_values,
    parse_curve_csv,
    report_schema,
)
from services.run_tracker import get_run_tracker
from services.training import (
    RunRecord,
    TaskSpec,
    TrainConfig,
    TrainingData,
    alpha_schedule,
    build_head,
    combined_loss,
    distill_loss,
    evaluate_pathways,
    relative_change,
    split_indices,
    train_cross_neck,
    train_neck,
)
from services.training.objective import combined_tensor


def _data(pipeline, expert_role: str = "expert1") -> TrainingData:
    return TrainingData(encoder=pipeline.features["encoder"], expert=pipeline.features[expert_role])


def _neck(data: TrainingData, **changes) -> NeckConfig:
    base = dict(layers=1, heads=2, d_model=8, d_in=data.encoder.dim, d_out=data.expert.dim,
                tokens=data.encoder.tokens)
    base.update(changes)
    return NeckConfig(**base)


def _train_cfg(**changes) -> TrainConfig:
    base = dict(experiment="prueba", total_steps=12, batch_size=16, eval_interval=4, log_interval=4)
    base.update(changes)
    return TrainConfig(**base)


TASK1 = TaskSpec(task_id="task1", head="linear", out_dim=2, seed=1)
TASK2 = TaskSpec(task_id="task2", head="linear", out_dim=2, seed=2, target_role="expert2")


# ---- Objetivo ----

def test_programa_alfa():
    assert alpha_schedule(500, 1000) == 0.5
    assert alpha_schedule(0, 1000) == 1.0
    assert alpha_schedule(1000, 1000) == 0.0
    assert alpha_schedule(5000, 1000) == 0.0
    with pytest.raises(ConfigError):
        alpha_schedule(1, 0)
    with pytest.raises(ConfigError):
        alpha_schedule(-1, 10)


def test_alfa_de_la_configuracion():
    cfg = TrainConfig(total_steps=10)
    assert cfg.alpha(0) == 1.0 and cfg.alpha(9) == 0.0
    held = TrainConfig(total_steps=10, alpha_hold=3)
    assert [held.alpha(s) for s in range(4)] == [1.0, 1.0, 1.0, 1.0]
    assert held.alpha(9) == 0.0
    assert TrainConfig(total_steps=10, distillation=False).alpha(0) == 0.0
    with pytest.raises(ValidationError):
        TrainConfig(total_steps=10, horizon=20)


def test_perdida_de_destilacion(rng):
    f = rng.normal(size=(3, 2, 4))
    assert distill_loss(Tensor(f), f).item() == 0.0
    assert distill_loss(Tensor(f + 2.0), f).item() == pytest.approx(4.0)
    a, b = rng.normal(size=(3, 2, 4)), rng.normal(size=(3, 2, 4))
    total = 0.0
    for value_a, value_b in zip(a.ravel(), b.ravel()):
        total += (value_a - value_b) ** 2
    assert abs(distill_loss(Tensor(a), b).item() - total / a.size) < 1e-12


def test_perdida_combinada():
    assert combined_loss(1.0, 2.0, 4.0) == 2.0
    assert combined_loss(0.0, 2.0, 4.0) == 4.0
    assert combined_loss(0.5, 2.0, 4.0) == 3.0
    assert combined_tensor(0.5, Tensor(2.0), Tensor(4.0)).item() == 3.0
    with pytest.raises(ConfigError):
        combined_loss(1.5, 2.0, 4.0)


# ---- Cabezas congeladas ----

def test_cabeza_congelada(rng):
    head = build_head(TASK1, 6)
    with pytest.raises(InvariantViolation):
        head.spec = TASK2
    with pytest.raises(ValueError):
        head.weight[0, 0] = 1.0
    head.verify()
    assert build_head(TASK1, 6).digest() == head.digest()
    identity = build_head(TaskSpec(head="identity"), 6)
    x = rng.normal(size=(4, 6))
    assert np.array_equal(identity.apply(x), x)
    with pytest.raises(ValidationError):
        TaskSpec(head="linear")


# ---- Entrenamiento directo ----

def test_split_depende_solo_del_experimento():
    train_a, eval_a = split_indices(100, 0.2, "exp")
    train_b, eval_b = split_indices(100, 0.2, "exp")
    assert np.array_equal(train_a, train_b) and np.array_equal(eval_a, eval_b)
    assert len(eval_a) == 20 and not set(train_a) & set(eval_a)
    assert np.all(np.diff(train_a) > 0)
    everything, same = split_indices(10, 0.0, "exp")
    assert np.array_equal(everything, same)


def test_entrenamiento_desglose_y_determinismo(small_pipeline):
    data = _data(small_pipeline)
    record, params = train_neck(_train_cfg(), _neck(data), data, TASK1)
    assert len(record.breakdowns) == 12
    for b in record.breakdowns:
        assert b.total == pytest.approx(b.alpha * b.distill + (1 - b.alpha) * b.task, abs=1e-12)
    assert record.breakdowns[0].alpha == 1.0 and record.breakdowns[-1].alpha == 0.0
    assert [s for s, _ in record.eval_history] == [4, 8, 12]
    assert np.isfinite(record.heldout_loss)

    again, params_again = train_neck(_train_cfg(), _neck(data), data, TASK1)
    assert [b.total for b in again.breakdowns] == [b.total for b in record.breakdowns]
    assert again.digest() == record.digest()
    assert params_again.digest() == params.digest()


def test_entrenamiento_dimensiones_incompatibles(small_pipeline):
    data = _data(small_pipeline)
    with pytest.raises(ConfigError):
        train_neck(_train_cfg(), _neck(data, d_in=7), data, TASK1)
    with pytest.raises(ConfigError):
        train_neck(_train_cfg(), _neck(data, tokens=5), data, TASK1)


def test_seguimiento_de_fd_y_metricas(small_pipeline):
    data = _data(small_pipeline)
    cfg = _train_cfg(alpha_hold=4, track_fd=True, eval_metrics=["fd", "cos"])
    record, _ = train_neck(cfg, _neck(data), data, TASK1)
    assert {"fd_init", "fd_after_hold", "fd_final"} <= set(record.final)
    assert record.final["metrics"]["fd"]["status"] == "ok"
    assert -1.0 <= record.final["metrics"]["cos"]["value"] <= 1.0


def test_gradiente_no_finito_aborta(small_pipeline, monkeypatch):
    from services.training import trainer

    def broken(params, grads, state):
        raise NumericError("gradiente no finito en el parámetro 'out.weight'", {"parameter": "out.weight"})

    monkeypatch.setattr(trainer, "adam_step", broken)
    data = _data(small_pipeline)
    with pytest.raises(TrainingAbort) as info:
        train_neck(_train_cfg(), _neck(data), data, TASK1)
    assert info.value.exit_code == 5
    assert len(info.value.last_breakdowns) == 1
    assert "out.weight" in info.value.message


def test_encoder_congelado_verificado_por_digest(small_pipeline, monkeypatch):
    from services.training import trainer

    data = _data(small_pipeline)
    record, _ = train_neck(_train_cfg(total_steps=4), _neck(data), data, TASK1)
    assert record.config["encoder_digest"] == data.encoder.digest()

    original = trainer.adam_step

    def tampering(params, grads, state):
        original(params, grads, state)
        data.encoder.data[0, 0, 0] += 1.0

    monkeypatch.setattr(trainer, "adam_step", tampering)
    with pytest.raises(InvariantViolation) as info:
        train_neck(_train_cfg(total_steps=4), _neck(data), data, TASK1)
    assert info.value.exit_code == 5


# ---- Adaptación cruzada ----

def test_cruzado_con_neck1_aleatorio(small_pipeline):
    data1 = _data(small_pipeline)
    neck1 = neck_init(_neck(data1))
    before = neck1.digest()
    data2 = _data(small_pipeline, "expert2")
    direct, _ = train_neck(_train_cfg(), _neck(data2), data2, TASK2)
    record, _ = train_cross_neck(neck1, _train_cfg(), _neck(data2, d_in=neck1.config.d_out), data2, TASK2,
                                 direct=direct)
    assert record.tag == "task1 → task2"
    assert np.isfinite(record.heldout_loss)
    assert neck1.digest() == before
    assert record.config["neck1_digest"] == before
    assert record.delta_pct == pytest.approx(relative_change(direct.heldout_loss, record.heldout_loss))


def test_cruzado_dimensiones_incompatibles(small_pipeline):
    data = _data(small_pipeline)
    neck1 = neck_init(_neck(data))
    with pytest.raises(ConfigError):
        train_cross_neck(neck1, _train_cfg(), _neck(data, d_in=neck1.config.d_out - 1), data, TASK2)


def test_cambio_relativo():
    assert relative_change(2.0, 2.2) == pytest.approx(-10.0)
    assert relative_change(2.0, 1.0) == pytest.approx(50.0)
    assert relative_change(0.0, 1.0) is None


# ---- Registro de corridas ----

def test_registro_de_corridas(tmp_path, small_pipeline):
    data = _data(small_pipeline)
    tracker = get_run_tracker(tmp_path / "runs")
    record, params = train_neck(_train_cfg(), _neck(data), data, TASK1, tracker=tracker)
    run_dir = tmp_path / "runs" / "prueba" / "0"
    assert (run_dir / "run.json").exists() and (run_dir / "neck.ckpt").exists()
    loaded = tracker.load_record(run_dir)
    assert loaded.digest() == record.digest()
    assert loaded.checkpoint == str(run_dir / "neck.ckpt")

    cross, _ = train_cross_neck(params, _train_cfg(), _neck(data, d_in=params.config.d_out), data, TASK2,
                                tracker=tracker)
    assert (tmp_path / "runs" / "prueba" / "task1__task2" / "0" / "run.json").exists()
    assert len(tracker.list_records("prueba")) == 2


def test_digest_ignora_tiempo_de_reloj():
    record = RunRecord(experiment="e", tag="t", seed=0, config={}, config_hash="h", wall_clock=1.0)
    assert record.digest() == record.model_copy(update={"wall_clock": 9.0}).digest()


# ---- Reporte de vías ----

def test_reporte_de_vias_entradas_identicas(rng):
    x = FeatureSet(rng.normal(size=(300, 4)), role="adapted", name="x")
    report = evaluate_pathways(x, x, ["fd", "cos", "kd_rbf"], experiment="id")
    assert report.entry("fd").value == 0.0
    assert report.entry("cos").value == pytest.approx(1.0)
    assert abs(report.entry("kd_rbf").value) < 0.02
    assert report.aggregate is None
    assert report.digest() == evaluate_pathways(x, x, ["fd", "cos", "kd_rbf"], experiment="id").digest()


def test_reporte_de_vias_varias_semillas_y_fallos(rng):
    x = FeatureSet(rng.normal(size=(300, 20)), role="adapted")
    y = FeatureSet(rng.normal(size=(300, 20)), role="expert")
    report = evaluate_pathways(x, y, ["fd", "ksg"], seeds=[0, 1, 2])
    assert report.seeds == [0, 1, 2]
    assert report.aggregate["fd"].n == 3
    ksg = report.entry("ksg")
    assert ksg.status == "failed" and ksg.diagnostics["exit_code"] == 2
    assert not report.all_failed()
    with pytest.raises(UsageError):
        evaluate_pathways(x, y, ["fd", "bogus"])


def test_reporte_independiente_mi_baja(rng):
    x = FeatureSet(rng.normal(size=(2000, 2)), role="adapted")
    y = FeatureSet(rng.normal(size=(2000, 2)), role="expert")
    report = evaluate_pathways(x, y, ["ksg", "mi1d"])
    assert report.entry("ksg").value <= 0.1
    assert report.entry("mi1d").value <= 0.1


# ---- Reportes y curvas ----

def test_entradas_de_reporte_validadas():
    with pytest.raises(ValidationError):
        MetricEntry(name="fd", status="failed")
    with pytest.raises(ValidationError):
        MetricEntry(name="fd", value=float("nan"))
    assert aggregate_values([1.0]).std is None
    assert aggregate_values([1.0, 3.0]).std == pytest.approx(np.sqrt(2.0))
    assert "metrics" in report_schema()["properties"]


def test_tabla_de_curvas_csv():
    table = CurveTable.from_samples("layers", {
        6.0: {"heldout_task_loss": [0.1, 0.3]},
        2.0: {"heldout_task_loss": [0.5]},
    })
    text = table.to_csv()
    assert text.splitlines()[0] == ",".join(CURVE_HEADER)
    assert text.splitlines()[1] == "2,heldout_task_loss,0.5,"
    parsed = parse_curve_csv(text)
    assert [r.sweep_value for r in parsed.rows] == [2.0, 6.0]
    assert parsed.rows[1].mean == pytest.approx(0.2)
    normalized = table.normalized()
    assert all(0.0 < r.mean < 1.0 for r in normalized.rows)
    with pytest.raises(UsageError):
        parse_curve_csv("a,b\n1,2\n")


# ---- Dirección (lentas) ----

@pytest.mark.slow
def test_tarea_lineal_sin_ruido_converge():
    pipeline = synth_task_pipeline(SynthSpec(encoder_gain=0.1, seed=0), 4000)
    data = _data(pipeline)
    cfg = TrainConfig(experiment="lineal", total_steps=3000, batch_size=64, eval_interval=500, log_interval=500)
    neck_cfg = NeckConfig(layers=2, d_model=32, d_in=data.encoder.dim, d_out=data.expert.dim,
                          tokens=data.encoder.tokens)
    task = TaskSpec(task_id="task1", head="linear", out_dim=4, seed=11)
    record, _ = train_neck(cfg, neck_cfg, data, task)
    assert record.heldout_loss < 1e-3


@pytest.mark.slow
def test_sobreajuste_de_un_lote():
    pipeline = synth_task_pipeline(SynthSpec(encoder_gain=0.1, seed=1), 8)
    data = _data(pipeline)
    cfg = TrainConfig(experiment="lote", total_steps=3000, batch_size=8, holdout=0.0, lr=1e-3,
                      distillation=False, eval_interval=500, log_interval=500)
    neck_cfg = NeckConfig(layers=2, d_model=32, d_in=data.encoder.dim, d_out=data.expert.dim,
                          tokens=data.encoder.tokens)
    record, _ = train_neck(cfg, neck_cfg, data, TaskSpec(task_id="t", head="linear", out_dim=4, seed=3))
    assert record.final["train_task_loss"] < 1e-5


@pytest.mark.slow
def test_cruzado_misma_tarea_cercano_al_directo():
    pipeline = synth_task_pipeline(SynthSpec(encoder_gain=0.1, seed=2), 3000)
    data = _data(pipeline)
    task = TaskSpec(task_id="task1", head="linear", out_dim=4, seed=11)
    cfg = TrainConfig(experiment="misma", total_steps=2000, eval_interval=500, log_interval=500)
    neck_cfg = NeckConfig(layers=2, d_model=32, d_in=data.encoder.dim, d_out=data.expert.dim,
                          tokens=data.encoder.tokens)
    direct, neck1 = train_neck(cfg, neck_cfg, data, task)
    cross, _ = train_cross_neck(neck1, cfg, neck_cfg.model_copy(update={"d_in": data.expert.dim}), data, task,
                                upstream_task="task1", direct=direct)
    assert cross.heldout_loss <= 1.10 * direct.heldout_loss + 1e-4


@pytest.mark.slow
@pytest.mark.parametrize("seed", [3, 4, 5])
@pytest.mark.parametrize("overlap", [0.0, 1.0])
def test_cruzado_segun_solapamiento_de_subespacios(overlap, seed):
    """ω=0: la vía cruzada pierde la información de la tarea 2; ω=1: queda cerca de la directa"""
    pipeline = synth_task_pipeline(SynthSpec(overlap=overlap, encoder_gain=0.1, seed=seed), 3000)
    data1, data2 = _data(pipeline), _data(pipeline, "expert2")
    cfg = TrainConfig(experiment=f"solapamiento-{overlap}", seed=seed, total_steps=2000,
                      eval_interval=500, log_interval=500)
    neck_cfg = NeckConfig(layers=2, d_model=8, heads=2, d_in=data1.encoder.dim, d_out=data1.expert.dim,
                          tokens=data1.encoder.tokens)
    _, neck1 = train_neck(cfg, neck_cfg, data1, TaskSpec(task_id="task1", head="linear", out_dim=4, seed=11))
    task2 = TaskSpec(task_id="task2", head="linear", out_dim=4, seed=12)
    direct, _ = train_neck(cfg, neck_cfg, data2, task2)
    cross, _ = train_cross_neck(neck1, cfg, neck_cfg.model_copy(update={"d_in": data1.expert.dim}), data2, task2,
                                direct=direct)
    if overlap == 0.0:
        assert cross.heldout_loss >= 1.10 * direct.heldout_loss
        assert cross.delta_pct < 0
    else:
        assert cross.heldout_loss <= 1.10 * direct.heldout_loss + 1e-4


@pytest.mark.slow
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_destilacion_acerca_al_experto(seed):
    """Con destilación la FD al experto cae al menos 5 veces respecto a entrenar sin ella"""
    pipeline = synth_task_pipeline(SynthSpec(encoder_gain=0.1, seed=seed), 2000)
    data = _data(pipeline)
    neck_cfg = NeckConfig(layers=2, d_model=32, d_in=data.encoder.dim, d_out=data.expert.dim,
                          tokens=data.encoder.tokens)
    task = TaskSpec(task_id="task1", head="linear", out_dim=4, seed=11)
    common = dict(experiment="destilacion", seed=seed, total_steps=1000, alpha_hold=200, track_fd=True,
                  eval_interval=250, log_interval=250)
    with_kd, _ = train_neck(TrainConfig(distillation=True, **common), neck_cfg, data, task)
    without_kd, _ = train_neck(TrainConfig(distillation=False, **common), neck_cfg, data, task)
    assert with_kd.final["fd_after_hold"] < with_kd.final["fd_init"]
    assert without_kd.final["fd_final"] >= 5.0 * with_kd.final["fd_final"]
