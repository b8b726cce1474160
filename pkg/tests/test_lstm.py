import numpy as np
import pytest

from aoiagg.predictor.linear import LinearRegression
from aoiagg.predictor.lstm import LSTMConfig, LSTMRegressor, TrainingDiverged, gradient_check

TINY = dict(units=4, layers=1, dropout=0.0, recurrent_dropout=0.0)


def tiny_data(n=6, steps=5, features=3, seed=0):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(n, steps, features)), rng.normal(size=n)


def test_default_config_values():
    cfg = LSTMConfig()
    assert (cfg.layers, cfg.units, cfg.batch_size, cfg.epochs) == (4, 64, 32, 50)
    assert (cfg.dropout, cfg.recurrent_dropout, cfg.activation, cfg.learning_rate) == (0.1, 0.1, "tanh", 1e-3)
    model = LSTMRegressor(cfg)
    model.init_params(3, np.random.default_rng(0))
    assert sum(1 for k in model.params if k.startswith("Wh")) == 4
    assert model.params["Wh0"].shape == (64, 256)


@pytest.mark.parametrize("activation", ["tanh", "relu"])
def test_gradient_check_tiny_net(activation):
    X, y = tiny_data()
    model = LSTMRegressor(LSTMConfig(activation=activation, **TINY))
    assert gradient_check(model, X, y, eps=1e-5) <= 1e-4


def test_gradient_check_stacked():
    X, y = tiny_data(n=4, steps=4, features=2, seed=1)
    model = LSTMRegressor(LSTMConfig(units=3, layers=2, dropout=0.0, recurrent_dropout=0.0))
    assert gradient_check(model, X, y) <= 1e-4


def test_gradient_check_zero_net_bias_terms():
    X = np.zeros((3, 4, 2))
    y = np.array([1.0, -1.0, 0.5])
    model = LSTMRegressor(LSTMConfig(**TINY))
    model.init_params(2, np.random.default_rng(0))
    model.params = {k: np.zeros_like(v) for k, v in model.params.items()}
    assert gradient_check(model, X, y) <= 1e-4


def test_gradient_check_requires_no_dropout():
    X, y = tiny_data()
    with pytest.raises(ValueError):
        gradient_check(LSTMRegressor(LSTMConfig(units=4, layers=1)), X, y)


def test_zero_epochs_keeps_initialization():
    X, y = tiny_data(n=20)
    cfg = LSTMConfig(epochs=0, **TINY)
    model = LSTMRegressor(cfg).fit(X, y)
    fresh = LSTMRegressor(cfg)
    fresh.init_params(3, np.random.default_rng(cfg.seed))
    assert all(np.array_equal(model.params[k], fresh.params[k]) for k in fresh.params)
    assert model.final_loss == model.initial_loss
    assert model.history == []


def test_training_is_seed_deterministic():
    X, y = tiny_data(n=40)
    cfg = LSTMConfig(units=5, layers=2, epochs=3, batch_size=8, seed=11)
    a, b = LSTMRegressor(cfg).fit(X, y), LSTMRegressor(cfg).fit(X, y)
    assert a.history == b.history
    assert all(np.array_equal(a.params[k], b.params[k]) for k in a.params)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_reports_epoch():
    X, y = tiny_data(n=16)
    y = y * 1e200
    model = LSTMRegressor(LSTMConfig(epochs=3, batch_size=4, learning_rate=1e300, **TINY))
    with pytest.raises(TrainingDiverged) as info:
        model.fit(X, y, standardize=False)
    assert info.value.epoch >= 1


def test_training_reduces_loss():
    rng = np.random.default_rng(2)
    X = rng.uniform(-1, 1, size=(200, 4, 1))
    y = X[:, -1, 0] ** 2 + 0.5 * X[:, 0, 0]
    model = LSTMRegressor(LSTMConfig(units=8, layers=1, epochs=30, batch_size=16, learning_rate=1e-2,
                                     dropout=0.0, recurrent_dropout=0.0)).fit(X, y)
    assert model.final_loss < 0.5 * model.initial_loss


def test_recurrent_close_to_linear_on_linear_data():
    rng = np.random.default_rng(3)
    speed = rng.uniform(15, 30, size=(400, 3, 1))
    y = 2 * speed[:, -1, 0] + 10
    X_train, y_train, X_test, y_test = speed[:320], y[:320], speed[320:], y[320:]
    lin = LinearRegression().fit(X_train, y_train)
    lin_mse = np.mean((lin.predict(X_test) - y_test) ** 2)
    rnn = LSTMRegressor(LSTMConfig(units=8, layers=1, epochs=50, batch_size=16, learning_rate=1e-2,
                                   dropout=0.0, recurrent_dropout=0.0)).fit(X_train, y_train)
    rnn_mse = np.mean((rnn.predict(X_test) - y_test) ** 2)
    # the linear fit is exact here; the network must come close in absolute terms
    assert rnn_mse <= lin_mse * 1.1 + 0.05 * np.var(y_test)


def test_invalid_config():
    with pytest.raises(ValueError):
        LSTMConfig(dropout=1.0)
    with pytest.raises(ValueError):
        LSTMConfig(activation="gelu")
    with pytest.raises(ValueError):
        LSTMConfig(units=0)
