"""Stacked LSTM regressor trained with backpropagation through time and Adam.

Gate order in every weight matrix is (input, forget, cell, output). Dropout
masks are sampled once per sequence and reused at every time step, on the
layer input and on the recurrent state respectively.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"training diverged at epoch {epoch} (loss={loss})")
        self.epoch = epoch
        self.loss = loss


@dataclass
class LSTMConfig:
    units: int = 64
    layers: int = 4
    dropout: float = 0.1
    recurrent_dropout: float = 0.1
    activation: str = "tanh"
    batch_size: int = 32
    epochs: int = 50
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-7
    seed: int = 0

    def __post_init__(self):
        if self.units < 1 or self.layers < 1:
            raise ValueError("units and layers must be >= 1")
        if not (0 <= self.dropout < 1 and 0 <= self.recurrent_dropout < 1):
            raise ValueError("dropout rates must be in [0, 1)")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.batch_size < 1 or self.epochs < 0 or self.learning_rate <= 0:
            raise ValueError("invalid training settings")


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


_ACTIVATIONS = {
    "tanh": (np.tanh, lambda a: 1.0 - a * a),
    "relu": (lambda z: np.maximum(z, 0.0), lambda a: (a > 0).astype(float)),
}


def glorot_uniform(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def orthogonal(rng, rows, cols):
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q *= np.sign(np.diag(r))
    return np.ascontiguousarray(q if rows >= cols else q.T)


@dataclass
class LSTMRegressor:
    config: LSTMConfig = field(default_factory=LSTMConfig)
    params: Dict[str, np.ndarray] = field(default_factory=dict)
    x_mean: Optional[np.ndarray] = None
    x_scale: Optional[np.ndarray] = None
    y_mean: float = 0.0
    y_scale: float = 1.0
    history: List[float] = field(default_factory=list)
    initial_loss: float = float("nan")
    final_loss: float = float("nan")

    # parameters -----------------------------------------------------------

    def init_params(self, n_inputs: int, rng: np.random.Generator) -> None:
        H = self.config.units
        p = {}
        for layer in range(self.config.layers):
            d = n_inputs if layer == 0 else H
            p[f"Wx{layer}"] = glorot_uniform(rng, d, 4 * H)
            p[f"Wh{layer}"] = orthogonal(rng, H, 4 * H)
            b = np.zeros(4 * H)
            b[H:2 * H] = 1.0     # forget-gate bias starts open
            p[f"b{layer}"] = b
        p["Wd"] = glorot_uniform(rng, H, 1)
        p["bd"] = np.zeros(1)
        self.params = p

    @property
    def n_params(self) -> int:
        return int(sum(v.size for v in self.params.values()))

    # forward / backward ---------------------------------------------------

    def _masks(self, rng, batch, n_inputs):
        H = self.config.units
        masks = []
        for layer in range(self.config.layers):
            d = n_inputs if layer == 0 else H
            mx = mh = None
            if rng is not None and self.config.dropout > 0:
                keep = 1.0 - self.config.dropout
                mx = (rng.random((batch, d)) < keep) / keep
            if rng is not None and self.config.recurrent_dropout > 0:
                keep = 1.0 - self.config.recurrent_dropout
                mh = (rng.random((batch, H)) < keep) / keep
            masks.append((mx, mh))
        return masks

    def forward(self, X: np.ndarray, rng: Optional[np.random.Generator] = None):
        """Return (predictions, cache). ``rng`` enables dropout."""
        p = self.params
        H = self.config.units
        act, _ = _ACTIVATIONS[self.config.activation]
        B, T, _ = X.shape
        masks = self._masks(rng, B, X.shape[2])
        seq = X
        cache = []
        for layer in range(self.config.layers):
            Wx, Wh, b = p[f"Wx{layer}"], p[f"Wh{layer}"], p[f"b{layer}"]
            mx, mh = masks[layer]
            xin = seq * mx[:, None, :] if mx is not None else seq
            # input projection for all steps at once
            zx = xin @ Wx + b
            h = np.zeros((B, H))
            c = np.zeros((B, H))
            hs, steps = [], []
            for t in range(T):
                hin = h * mh if mh is not None else h
                z = zx[:, t] + hin @ Wh
                i = _sigmoid(z[:, :H])
                f = _sigmoid(z[:, H:2 * H])
                g = act(z[:, 2 * H:3 * H])
                o = _sigmoid(z[:, 3 * H:])
                c_prev = c
                c = f * c_prev + i * g
                ac = act(c)
                h = o * ac
                steps.append((hin, c_prev, i, f, g, o, ac))
                hs.append(h)
            cache.append((xin, mx, mh, steps))
            seq = np.stack(hs, axis=1)
        h_last = seq[:, -1]
        y = h_last @ p["Wd"] + p["bd"]
        return y[:, 0], (cache, h_last)

    def backward(self, dy: np.ndarray, cache) -> Dict[str, np.ndarray]:
        p = self.params
        H = self.config.units
        _, dact = _ACTIVATIONS[self.config.activation]
        layers, h_last = cache
        grads = {"Wd": h_last.T @ dy[:, None], "bd": np.array([dy.sum()])}
        B = len(dy)
        T = len(layers[0][3])
        dseq = np.zeros((B, T, H))
        dseq[:, -1] = dy[:, None] @ p["Wd"].T
        for layer in reversed(range(self.config.layers)):
            Wx, Wh = p[f"Wx{layer}"], p[f"Wh{layer}"]
            xin, mx, mh, steps = layers[layer]
            dz_all = np.zeros((B, T, 4 * H))
            dWh = np.zeros_like(Wh)
            dh_next = np.zeros((B, H))
            dc_next = np.zeros((B, H))
            for t in reversed(range(T)):
                hin, c_prev, i, f, g, o, ac = steps[t]
                dh = dseq[:, t] + dh_next
                do = dh * ac
                dc = dh * o * dact(ac) + dc_next
                dz = np.concatenate([
                    dc * g * i * (1 - i),
                    dc * c_prev * f * (1 - f),
                    dc * i * dact(g),
                    do * o * (1 - o),
                ], axis=1)
                dz_all[:, t] = dz
                dc_next = dc * f
                dWh += hin.T @ dz
                dh_next = dz @ Wh.T
                if mh is not None:
                    dh_next = dh_next * mh
            grads[f"Wh{layer}"] = dWh
            grads[f"Wx{layer}"] = np.einsum("btd,btk->dk", xin, dz_all)
            grads[f"b{layer}"] = dz_all.sum(axis=(0, 1))
            dx = dz_all @ Wx.T
            if mx is not None:
                dx = dx * mx[:, None, :]
            dseq = dx
        return grads

    def loss_and_grads(self, X, y, rng=None) -> Tuple[float, Dict[str, np.ndarray]]:
        pred, cache = self.forward(X, rng)
        err = pred - y
        loss = float(np.mean(err ** 2))
        return loss, self.backward(2.0 * err / len(y), cache)

    # training -------------------------------------------------------------

    def _standardize_fit(self, X, y):
        self.x_mean = X.reshape(-1, X.shape[2]).mean(axis=0)
        scale = X.reshape(-1, X.shape[2]).std(axis=0)
        scale[scale == 0] = 1.0
        self.x_scale = scale
        self.y_mean = float(y.mean())
        self.y_scale = float(y.std()) or 1.0

    def _scaled(self, X):
        return (np.asarray(X, dtype=float) - self.x_mean) / self.x_scale

    def _loss(self, Xs, ys) -> float:
        pred, _ = self.forward(Xs)
        return float(np.mean((pred - ys) ** 2))

    def fit(self, X: np.ndarray, y: np.ndarray, *, standardize: bool = True) -> "LSTMRegressor":
        X = np.asarray(X, dtype=float)
        if X.ndim == 2:
            X = X[:, :, None]
        y = np.asarray(y, dtype=float)
        if len(y) == 0 or len(X) != len(y):
            raise ValueError("X and y must be non-empty and of equal length")
        cfg = self.config
        rng = np.random.default_rng(cfg.seed)
        if standardize:
            self._standardize_fit(X, y)
        else:
            self.x_mean, self.x_scale = np.zeros(X.shape[2]), np.ones(X.shape[2])
            self.y_mean, self.y_scale = 0.0, 1.0
        if not self.params:
            self.init_params(X.shape[2], rng)
        Xs = self._scaled(X)
        ys = (y - self.y_mean) / self.y_scale
        self.initial_loss = self._loss(Xs, ys)
        self.history = []
        m = {k: np.zeros_like(v) for k, v in self.params.items()}
        v = {k: np.zeros_like(v) for k, v in self.params.items()}
        step = 0
        for epoch in range(1, cfg.epochs + 1):
            order = rng.permutation(len(ys))
            total = 0.0
            for start in range(0, len(ys), cfg.batch_size):
                idx = order[start:start + cfg.batch_size]
                loss, grads = self.loss_and_grads(Xs[idx], ys[idx], rng)
                if not np.isfinite(loss):
                    raise TrainingDiverged(epoch, loss)
                total += loss * len(idx)
                step += 1
                lr = cfg.learning_rate * np.sqrt(1 - cfg.beta2 ** step) / (1 - cfg.beta1 ** step)
                for k, g in grads.items():
                    m[k] = cfg.beta1 * m[k] + (1 - cfg.beta1) * g
                    v[k] = cfg.beta2 * v[k] + (1 - cfg.beta2) * g * g
                    self.params[k] -= lr * m[k] / (np.sqrt(v[k]) + cfg.epsilon)
            epoch_loss = total / len(ys)
            if not np.isfinite(epoch_loss):
                raise TrainingDiverged(epoch, epoch_loss)
            self.history.append(epoch_loss)
        self.final_loss = self._loss(Xs, ys)
        if not np.isfinite(self.final_loss):
            raise TrainingDiverged(cfg.epochs, self.final_loss)
        return self

    def predict(self, X: np.ndarray) -> np.ndarray:
        if not self.params:
            raise RuntimeError("model is not fitted")
        X = np.asarray(X, dtype=float)
        if X.ndim == 2:
            X = X[:, :, None]
        pred, _ = self.forward(self._scaled(X))
        return pred * self.y_scale + self.y_mean

    # persistence helpers --------------------------------------------------

    def get_params(self) -> Dict[str, np.ndarray]:
        out = dict(self.params)
        out["x_mean"] = self.x_mean
        out["x_scale"] = self.x_scale
        out["y_norm"] = np.array([self.y_mean, self.y_scale])
        return out

    @classmethod
    def from_params(cls, params: Dict[str, np.ndarray], config: LSTMConfig) -> "LSTMRegressor":
        model = cls(config=config)
        model.params = {k: np.array(v, dtype=float) for k, v in params.items()
                        if k not in ("x_mean", "x_scale", "y_norm")}
        model.x_mean = np.asarray(params["x_mean"], dtype=float)
        model.x_scale = np.asarray(params["x_scale"], dtype=float)
        model.y_mean, model.y_scale = map(float, params["y_norm"])
        return model

    def config_dict(self) -> dict:
        return asdict(self.config)


def gradient_check(model: LSTMRegressor, X: np.ndarray, y: np.ndarray, eps: float = 1e-5,
                   max_checks: Optional[int] = None, seed: int = 0) -> float:
    """Max relative error between analytic and central-difference gradients.

    Dropout must be disabled: the check compares deterministic losses.
    """
    if model.config.dropout or model.config.recurrent_dropout:
        raise ValueError("gradient check requires dropout and recurrent_dropout to be 0")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if not model.params:
        model.init_params(X.shape[2], np.random.default_rng(seed))
    _, grads = model.loss_and_grads(X, y)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for name in list(model.params):
        model.params[name] = np.ascontiguousarray(model.params[name])
        flat = model.params[name].reshape(-1)
        indices = np.arange(flat.size)
        if max_checks is not None and flat.size > max_checks:
            indices = rng.choice(flat.size, max_checks, replace=False)
        g = grads[name].reshape(-1)
        for j in indices:
            orig = flat[j]
            flat[j] = orig + eps
            plus = model._loss(X, y)
            flat[j] = orig - eps
            minus = model._loss(X, y)
            flat[j] = orig
            numeric = (plus - minus) / (2 * eps)
            denom = max(abs(numeric) + abs(g[j]), 1e-8)
            worst = max(worst, abs(numeric - g[j]) / denom)
    return worst
