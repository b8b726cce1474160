"""Forecaster adapters plugged into the predictive aggregation policy."""
from __future__ import annotations

from typing import Dict, Mapping, Optional, Tuple

import numpy as np

from ..aggregator import Forecaster, Window
from ..kinematics import NodeKind
from .model import PredictorModel, predict_n_step


class ModelForecaster(Forecaster):
    """Routes each request to the trained model for the node kind.

    Models are keyed by (kind, horizon). When no model matches the requested
    horizon exactly (adaptive periods), the one with the nearest horizon is
    used.
    """

    def __init__(self, models: Mapping[Tuple[NodeKind, int], PredictorModel]):
        if not models:
            raise ValueError("at least one model is required")
        self.models: Dict[Tuple[NodeKind, int], PredictorModel] = dict(models)
        windows = {m.window for m in self.models.values()}
        if len(windows) != 1:
            raise ValueError(f"all models must share one window length, got {sorted(windows)}")
        self.window_size = windows.pop()
        self.calls = 0

    @classmethod
    def from_models(cls, *models: PredictorModel) -> "ModelForecaster":
        return cls({(NodeKind(m.node_kind), m.horizon): m for m in models})

    def model_for(self, kind: NodeKind, horizon: int) -> PredictorModel:
        if (kind, horizon) in self.models:
            return self.models[(kind, horizon)]
        candidates = [(abs(h - horizon), h) for k, h in self.models if k is kind]
        if not candidates:
            raise KeyError(f"no model for node kind {kind.value}")
        return self.models[(kind, min(candidates)[1])]

    def forecast(self, node_id: str, kind: NodeKind, window: Window, cycle: int, horizon: int) -> float:
        model = self.model_for(kind, horizon)
        arr = np.asarray(window, dtype=float)[-model.window:]
        self.calls += 1
        return predict_n_step(model, arr, model.horizon)


class OracleForecaster(Forecaster):
    """Looks up the AoI the channel actually produced (upper-bound reference)."""

    window_size = 1

    def __init__(self, truth: Mapping[Tuple[str, int], float], missing: float = float("inf")):
        self.truth = truth
        self.missing = missing

    def forecast(self, node_id: str, kind: NodeKind, window: Window, cycle: int, horizon: int) -> float:
        return self.truth.get((node_id, cycle + horizon), self.missing)


class ConstantForecaster(Forecaster):
    """Always predicts the same AoI; useful for tests and as a baseline."""

    def __init__(self, value: float, window_size: int = 1):
        self.value = value
        self.window_size = window_size

    def forecast(self, node_id, kind, window, cycle, horizon) -> float:
        return self.value
