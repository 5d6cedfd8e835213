import json
from dataclasses import dataclass

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dscsrgm.corpus import from_counts
from dscsrgm.errors import NoTrainingData
from dscsrgm.forecaster import (
    TrainConfig, fit_forecaster, forecast, load_model, make_windows, save_model,
    scale_window, split_series, unscale, windows_from_counts,
)

from gradcheck import max_relative_error

TINY = dict(window=8, layers=1, hidden=8, dropout=0.0, batch=16)


def test_defaults():
    c = TrainConfig()
    assert (c.window, c.layers, c.hidden, c.dropout, c.epochs, c.batch, c.split_ratio) == (
        8, 4, 128, 0.2, 300, 64, 0.8)
    assert c.learn_rate == 1e-3


@pytest.mark.parametrize("bad", [dict(window=0), dict(dropout=1.0), dict(epochs=0),
                                 dict(split_ratio=0.0), dict(dtype="float16")])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        TrainConfig(**bad)


def test_window_count():
    x, y, lo, hi = windows_from_counts(np.arange(10.0), 8)
    assert x.shape == (2, 8) and y.shape == (2,)


def test_ramp_scaling():
    x, y, lo, hi = windows_from_counts(np.arange(10.0, 19.0), 8)
    np.testing.assert_allclose(x[0], np.arange(8) / 7, atol=1e-15)
    assert y[0] == pytest.approx(8 / 7, abs=1e-15)
    assert lo[0] == 10 and hi[0] == 17


def test_flat_window():
    x, y, _, _ = windows_from_counts(np.full(9, 5.0), 8)
    assert np.all(x == 0) and y[0] == 0


@given(st.lists(st.floats(-1e6, 1e6), min_size=8, max_size=8).filter(lambda w: np.ptp(w) > 1e-3))
def test_scaling_round_trip(w):
    s, lo, span = scale_window(w)
    assert s.min() >= 0 and s.max() <= 1
    np.testing.assert_allclose(unscale(s, lo, span), w, rtol=0, atol=1e-12 * max(1, np.abs(w).max()))


def ramp_set(n, length=20):
    return [from_counts(f"r{i}", np.arange(1.0, length + 1) * (i + 1)) for i in range(n)]


def test_split_is_series_level():
    train, val = split_series(ramp_set(10), TrainConfig(), np.random.default_rng(0))
    assert len(val) == 2 and len(train) == 8
    assert not {s.id for s in train} & {s.id for s in val}


def test_split_small_sets():
    cfg = TrainConfig()
    train, val = split_series(ramp_set(2), cfg, np.random.default_rng(0))
    assert len(train) == 1 and len(val) == 1
    train, val = split_series(ramp_set(1), cfg, np.random.default_rng(0))
    assert len(train) == 1 and len(val) == 0


def test_no_training_data():
    with pytest.raises(NoTrainingData):
        make_windows([from_counts("s", np.arange(1.0, 9.0))], TrainConfig(), np.random.default_rng(0))


def test_windows_skip_short_series():
    series = ramp_set(3) + [from_counts("short", np.arange(1.0, 6.0))]
    tr, va = make_windows(series, TrainConfig(), np.random.default_rng(0))
    assert "short" not in tr.series_ids + va.series_ids
    assert len(tr) + len(va) == 3 * 12


def test_gradients_single_layer():
    assert max_relative_error(layers=1, hidden=4, n=3) < 1e-4


def test_gradients_stacked_with_dropout():
    assert max_relative_error(layers=2, hidden=3, n=3, dropout=0.3, seed=4) < 1e-4


@pytest.fixture(scope="module")
def ramp_model():
    cfg = TrainConfig(**TINY, epochs=150, seed=1, dtype="float64")
    return fit_forecaster(ramp_set(6), cfg)


def test_training_reduces_loss(ramp_model):
    assert ramp_model.train_history[-1] < ramp_model.train_history[0]


def test_ramp_prediction(ramp_model):
    pred = ramp_model.predict_scaled((np.arange(8.0) / 7)[None, :])[0]
    assert pred == pytest.approx(8 / 7, abs=0.05)


def test_checkpoint_is_best_validation(ramp_model):
    assert ramp_model.checkpoint_metric == "validation"
    assert ramp_model.best_val_loss == min(ramp_model.val_history)
    assert ramp_model.best_val_loss <= ramp_model.val_history[-1]
    assert ramp_model.val_history[ramp_model.epoch_of_best - 1] == ramp_model.best_val_loss


def test_best_val_loss_matches_checkpoint_weights():
    cfg = TrainConfig(**TINY, epochs=5, seed=2)
    series = ramp_set(5)
    model = fit_forecaster(series, cfg)
    _, val = make_windows(series, cfg, np.random.default_rng(np.random.SeedSequence([2, 0])))
    assert model.net.mse(val.inputs, val.targets) == model.best_val_loss


def test_training_deterministic():
    cfg = TrainConfig(window=8, layers=2, hidden=8, dropout=0.2, batch=16, epochs=5, seed=3)
    a = fit_forecaster(ramp_set(5), cfg)
    b = fit_forecaster(ramp_set(5), cfg)
    assert a.best_val_loss == b.best_val_loss
    for k in a.net.params:
        assert np.array_equal(a.net.params[k], b.net.params[k])


def test_single_series_uses_training_loss():
    model = fit_forecaster(ramp_set(1), TrainConfig(**TINY, epochs=3))
    assert model.checkpoint_metric == "training"


def test_forecast_properties(ramp_model):
    obs = np.arange(1.0, 21.0)
    assert forecast(ramp_model, obs, 0).shape == (0,)
    f5 = forecast(ramp_model, obs, 5)
    f6 = forecast(ramp_model, obs, 6)
    np.testing.assert_array_equal(f5, f6[:5])
    np.testing.assert_array_equal(f5, forecast(ramp_model, obs, 5))
    # learned ramp continuation
    np.testing.assert_allclose(f5, np.arange(21.0, 26.0), rtol=0.05)


def test_forecast_needs_full_window(ramp_model):
    with pytest.raises(ValueError):
        forecast(ramp_model, np.arange(1.0, 5.0), 3)


@dataclass
class _Echo:
    """Stand-in model returning the last scaled input value."""
    config: TrainConfig

    def predict_scaled(self, X):
        return np.asarray(X)[:, -1]


def test_recursive_denormalisation_trace():
    obs = np.array([3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0])
    np.testing.assert_allclose(forecast(_Echo(TrainConfig()), obs, 4), [6.0] * 4, atol=1e-12)


def test_clamp():
    class Down(_Echo):
        def predict_scaled(self, X):
            return np.zeros(len(X))
    obs = np.arange(1.0, 9.0)
    assert np.all(forecast(Down(TrainConfig()), obs, 3) == 1.0)
    assert np.all(forecast(Down(TrainConfig()), obs, 3, clamp=True) == 8.0)


def test_checkpoint_round_trip(tmp_path, ramp_model):
    save_model(ramp_model, tmp_path / "m")
    manifest = json.loads((tmp_path / "m" / "manifest.json").read_text())
    assert manifest["format"] == "dscsrgm-forecaster" and manifest["version"] == 1
    back = load_model(tmp_path / "m")
    obs = np.arange(2.0, 30.0, 2.0)
    np.testing.assert_array_equal(forecast(back, obs, 7), forecast(ramp_model, obs, 7))
    assert back.best_val_loss == ramp_model.best_val_loss


def test_checkpoint_rejects_foreign(tmp_path, ramp_model):
    save_model(ramp_model, tmp_path)
    m = json.loads((tmp_path / "manifest.json").read_text())
    m["version"] = 99
    (tmp_path / "manifest.json").write_text(json.dumps(m))
    with pytest.raises(ValueError):
        load_model(tmp_path)
