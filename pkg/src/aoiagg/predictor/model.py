"""Uniform wrapper over the three regressors: prediction, evaluation, persistence."""
from __future__ import annotations

import json
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np

from .forest import RandomForest
from .linear import LinearRegression
from .lstm import LSTMConfig, LSTMRegressor

MAGIC = b"AOIPRED\x00"
FORMAT_VERSION = 1
MODEL_KINDS = ("linear", "recurrent", "forest")
ACCURACY_TOLERANCE = 0.10


class ModelFormatError(ValueError):
    pass


class HorizonMismatch(ValueError):
    pass


def build_regressor(kind: str, config: Optional[dict] = None):
    config = dict(config or {})
    if kind == "linear":
        return LinearRegression()
    if kind == "forest":
        return RandomForest(**config)
    if kind == "recurrent":
        return LSTMRegressor(config=LSTMConfig(**config))
    raise ValueError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")


@dataclass
class PredictorModel:
    kind: str
    horizon: int
    window: int
    regressor: object
    config: dict = field(default_factory=dict)
    node_kind: str = "sensor"
    latencies_ms: List[float] = field(default_factory=list)

    @classmethod
    def create(cls, kind: str, horizon: int, window: int, config: Optional[dict] = None,
               node_kind: str = "sensor") -> "PredictorModel":
        return cls(kind, horizon, window, build_regressor(kind, config), dict(config or {}), node_kind)

    def fit(self, X: np.ndarray, y: np.ndarray) -> "PredictorModel":
        self.regressor.fit(X, y)
        return self

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(self.regressor.predict(np.asarray(X, dtype=float)), dtype=float)

    @property
    def n_params(self) -> int:
        return int(self.regressor.n_params)


def predict_n_step(model: PredictorModel, window: np.ndarray, n: int) -> float:
    """AoI forecast ``n`` cycles past the end of ``window``.

    Each model is trained for one horizon, so ``n`` must match it. The
    wall-clock cost of the call is appended to ``model.latencies_ms``.
    """
    if n != model.horizon:
        raise HorizonMismatch(f"model predicts {model.horizon} steps ahead, asked for {n}")
    window = np.asarray(window, dtype=float)
    if window.shape[0] != model.window:
        raise ValueError(f"window has {window.shape[0]} entries, model expects {model.window}")
    start = time.perf_counter()
    value = float(model.predict(window[None])[0])
    model.latencies_ms.append((time.perf_counter() - start) * 1000.0)
    return value


@dataclass
class Evaluation:
    mae_ms: float
    accuracy: float          # fraction within the relative tolerance
    latency_ms: float        # mean single-window prediction time
    n_params: int
    n_examples: int

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def accuracy_within(pred: np.ndarray, truth: np.ndarray, tolerance: float = ACCURACY_TOLERANCE) -> float:
    pred, truth = np.asarray(pred, float), np.asarray(truth, float)
    if len(truth) == 0:
        return float("nan")
    return float(np.mean(np.abs(pred - truth) <= tolerance * np.abs(truth)))


def evaluate(model: PredictorModel, X: np.ndarray, y: np.ndarray, latency_samples: int = 50) -> Evaluation:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(y) == 0:
        raise ValueError("cannot evaluate on an empty test set")
    pred = model.predict(X)
    samples = []
    for i in range(min(latency_samples, len(X))):
        start = time.perf_counter()
        model.predict(X[i:i + 1])
        samples.append((time.perf_counter() - start) * 1000.0)
    return Evaluation(float(np.mean(np.abs(pred - y))), accuracy_within(pred, y),
                      float(np.mean(samples)), model.n_params, len(y))


# persistence ----------------------------------------------------------------

def _regressor_params(model: PredictorModel) -> Dict[str, np.ndarray]:
    return {k: np.asarray(v, dtype=float) for k, v in model.regressor.get_params().items()}


def _regressor_from(kind: str, params: Dict[str, np.ndarray], config: dict):
    if kind == "linear":
        return LinearRegression.from_params(params)
    if kind == "forest":
        return RandomForest.from_params(params, **config)
    if kind == "recurrent":
        return LSTMRegressor.from_params(params, LSTMConfig(**config))
    raise ModelFormatError(f"unknown model kind {kind!r}")


def save_model(model: PredictorModel, path: Union[str, Path]) -> Path:
    """Versioned binary: magic, version, JSON header, little-endian float64 blobs."""
    path = Path(path)
    params = _regressor_params(model)
    header = {
        "kind": model.kind, "horizon": model.horizon, "window": model.window,
        "node_kind": model.node_kind, "config": model.config,
        "arrays": [[name, list(arr.shape)] for name, arr in params.items()],
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(blob)))
        fh.write(blob)
        for arr in params.values():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return path


def load_model(path: Union[str, Path]) -> PredictorModel:
    data = Path(path).read_bytes()
    if not data.startswith(MAGIC):
        raise ModelFormatError(f"{path}: not a predictor model file")
    offset = len(MAGIC)
    if len(data) < offset + 8:
        raise ModelFormatError(f"{path}: truncated header")
    version, size = struct.unpack_from("<II", data, offset)
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"{path}: unsupported format version {version}")
    offset += 8
    try:
        header = json.loads(data[offset:offset + size].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"{path}: corrupt header") from exc
    offset += size
    params = {}
    for name, shape in header["arrays"]:
        count = int(np.prod(shape)) if shape else 1
        end = offset + 8 * count
        if end > len(data):
            raise ModelFormatError(f"{path}: truncated array {name!r}")
        params[name] = np.frombuffer(data[offset:end], dtype="<f8").reshape(shape).astype(float)
        offset = end
    if offset != len(data):
        raise ModelFormatError(f"{path}: trailing bytes")
    regressor = _regressor_from(header["kind"], params, header["config"])
    return PredictorModel(header["kind"], header["horizon"], header["window"], regressor,
                          header["config"], header.get("node_kind", "sensor"))
