import numpy as np
import pytest

from altpred.dataset import MetarTable, apply_normalizer, build_samples, fit_normalizer, split
from altpred.errors import ConfigError, DataError, TrainingDiverged
from altpred.ingest import extract_arrivals
from altpred.nn import ModelConfig, build_model
from altpred.simgen import ScenarioConfig, generate
from altpred.train import (
    Arrays, TrainConfig, arrays_from_samples, load_checkpoint, predict, read_history, save_checkpoint, train,
)


def _random_arrays(n, size=16, seed=0, spread=300.0):
    rng = np.random.default_rng(seed)
    return Arrays(rng.random((n, size, size, 3)), rng.normal(size=(n, 12)), rng.normal(size=(n, 5)),
                  600.0 + spread * rng.random(n))


def test_single_sample_overfit():
    one = _random_arrays(1, 32)
    model = build_model(ModelConfig.desk(image_size=32), 0)
    result = train(model, one, one, TrainConfig(epochs=500))
    assert result.history[-1]["train_mae"] < 1.0
    assert abs(predict(model, one)[0] - one.labels[0]) < 1.0


def test_small_set_overfits():
    data = _random_arrays(8, 16, spread=600.0)
    model = build_model(ModelConfig.desk(image_size=16), 0)
    result = train(model, data, data, TrainConfig(epochs=300, batch_size=8, lr=3e-3, dtype="float64"))
    start = np.mean(np.abs(data.labels - np.median(data.labels)))
    assert result.best_val_mae < 0.25 * start


def test_zero_learning_rate_keeps_parameters():
    data = _random_arrays(10)
    model = build_model(ModelConfig.desk(image_size=16), 0)
    before = {k: p.data.copy() for k, p in model.named_parameters()}
    train(model, data, data, TrainConfig(epochs=3, batch_size=4, lr=0.0, dtype="float64"))
    for k, p in model.named_parameters():
        np.testing.assert_array_equal(p.data, before[k])


def test_training_is_deterministic(tmp_path):
    data = _random_arrays(12)

    def run(path):
        model = build_model(ModelConfig.desk(image_size=16), 3)
        res = train(model, data, data, TrainConfig(epochs=3, batch_size=4, seed=7), history_path=path)
        return predict(model, data), res.history

    p1, h1 = run(tmp_path / "a.csv")
    p2, h2 = run(tmp_path / "b.csv")
    np.testing.assert_array_equal(p1, p2)
    assert h1 == h2
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a.csv").read_text().splitlines()[0] == "epoch,train_mae,val_mae"
    assert [r["epoch"] for r in read_history(tmp_path / "a.csv")] == [1, 2, 3]


def test_best_epoch_weights_are_returned():
    data = _random_arrays(12)
    model = build_model(ModelConfig.desk(image_size=16), 0)
    res = train(model, data, data, TrainConfig(epochs=4, batch_size=4))
    assert res.best_val_mae == min(h["val_mae"] for h in res.history)
    val = np.mean(np.abs(predict(model, data) - data.labels))
    assert val == pytest.approx(res.best_val_mae, rel=1e-5)
    assert not model.training


def test_divergence_is_reported():
    data = _random_arrays(8)
    model = build_model(ModelConfig.desk(image_size=16), 0)
    with pytest.raises(TrainingDiverged):
        train(model, data, data, TrainConfig(epochs=20, batch_size=4, lr=1e12))


@pytest.mark.parametrize("kw", [{"epochs": -1}, {"batch_size": 0}, {"lr": -1.0}, {"lr": float("nan")},
                                {"dtype": "float16"}])
def test_invalid_config(kw):
    with pytest.raises(ConfigError):
        TrainConfig(**kw).validate()


def test_config_from_dict():
    assert TrainConfig.from_dict({"epochs": 5}).epochs == 5
    with pytest.raises(ConfigError):
        TrainConfig.from_dict({"epoch": 5})


def test_empty_sets_rejected():
    data = _random_arrays(4)
    with pytest.raises(DataError):
        train(build_model(ModelConfig.desk(image_size=16), 0), data.take(slice(0, 0)), data, TrainConfig(epochs=1))
    with pytest.raises(DataError):
        Arrays(data.images, data.tabular[:2], data.holding, data.labels)


def test_predict_restores_mode_and_handles_empty():
    model = build_model(ModelConfig.desk(image_size=16), 0)
    model.train()
    data = _random_arrays(5)
    out = predict(model, data, batch_size=2)
    assert out.shape == (5,) and out.dtype == np.float64 and model.training
    assert predict(model, data.take(slice(0, 0))).shape == (0,)


@pytest.mark.parametrize("ablate", [False, True])
def test_checkpoint_round_trip(tmp_path, ablate):
    data = _random_arrays(6)
    model = build_model(ModelConfig.desk(image_size=16, ablate_holding=ablate), 0)
    train(model, data, data, TrainConfig(epochs=1, batch_size=3))
    path = save_checkpoint(model, tmp_path / "model.json", {"tau": 60})
    back, extra = load_checkpoint(path)
    assert extra == {"tau": 60}
    assert back.cfg == model.cfg and back.dtype == model.dtype
    np.testing.assert_array_equal(predict(back, data), predict(model, data))


def test_bad_checkpoints(tmp_path):
    p = tmp_path / "x.json"
    p.write_text("{}")
    with pytest.raises(DataError):
        load_checkpoint(p)
    p.write_text('{"format": "altpred-checkpoint", "version": 99}')
    with pytest.raises(DataError, match="version"):
        load_checkpoint(p)
    with pytest.raises(DataError):
        load_checkpoint(tmp_path / "none.json")


def test_beats_constant_predictor_on_512_samples():
    sc = generate(ScenarioConfig(seed=4, duration_h=14.5, rate_per_h=36))
    arrivals = extract_arrivals(sc.trajectories, sc.geometry, sc.runways)[:512]
    samples = build_samples(arrivals, sc.trajectories, MetarTable.from_rows(sc.metar), sc.flight_plans,
                            sc.geometry, sc.runways, 60, 900, 64)
    assert len(samples) == 512
    train_s, val_s, _ = split(samples, seed=0)
    norm = fit_normalizer(train_s)
    tr, va = (arrays_from_samples(apply_normalizer(norm, s)) for s in (train_s, val_s))
    model = build_model(ModelConfig.desk(), 0)
    result = train(model, tr, va, TrainConfig(epochs=50))
    constant = np.mean(np.abs(va.labels - tr.labels.mean()))
    assert result.best_val_mae < constant
