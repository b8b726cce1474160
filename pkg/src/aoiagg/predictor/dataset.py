"""Sliding-window supervised datasets built from per-node AoI traces."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

FEATURES = ("age_ms", "rel_speed_mps", "aoi_ms")


class TraceTooShort(ValueError):
    pass


@dataclass
class Dataset:
    X_train: np.ndarray      # (n, window, 3)
    y_train: np.ndarray      # (n,)
    X_test: np.ndarray
    y_test: np.ndarray
    window: int
    horizon: int
    train_rows: int
    test_rows: int

    @property
    def n_train(self) -> int:
        return len(self.y_train)

    @property
    def n_test(self) -> int:
        return len(self.y_test)


def split_rows(rows: Sequence[Mapping], train_fraction: float) -> Tuple[List[Mapping], List[Mapping]]:
    """Chronological split of trace rows (ties broken by node id)."""
    ordered = sorted(rows, key=lambda r: (r["time_ms"], r["node_id"]))
    cut = int(round(len(ordered) * train_fraction))
    return ordered[:cut], ordered[cut:]


def _runs(rows: Sequence[Mapping]) -> Dict[str, List[List[Mapping]]]:
    """Per node, maximal runs of consecutive cycles."""
    by_node: Dict[str, List[Mapping]] = {}
    for row in rows:
        by_node.setdefault(row["node_id"], []).append(row)
    runs: Dict[str, List[List[Mapping]]] = {}
    for node, node_rows in by_node.items():
        node_rows.sort(key=lambda r: r["cycle"])
        current: List[Mapping] = []
        out = []
        for row in node_rows:
            if current and row["cycle"] != current[-1]["cycle"] + 1:
                out.append(current)
                current = []
            current.append(row)
        if current:
            out.append(current)
        runs[node] = out
    return runs


def window_features(run: Sequence[Mapping], start_time: Optional[float] = None) -> np.ndarray:
    """(len(run), 3) array of (connection age, relative speed, AoI)."""
    t0 = run[0]["time_ms"] if start_time is None else start_time
    return np.array([[r["time_ms"] - t0, r["rel_speed_mps"], r["aoi_ms"]] for r in run], dtype=float)


def _windows(rows: Sequence[Mapping], window: int, horizon: int,
             missing_target: Optional[float]) -> Tuple[np.ndarray, np.ndarray]:
    xs, ys = [], []
    for node, runs in sorted(_runs(rows).items()):
        for run in runs:
            if len(run) < window:
                continue
            feats = window_features(run)
            for end in range(window - 1, len(run)):
                target_idx = end + horizon
                if target_idx < len(run):
                    target = run[target_idx]["aoi_ms"]
                elif missing_target is not None:
                    target = missing_target
                else:
                    continue
                xs.append(feats[end - window + 1:end + 1])
                ys.append(target)
    if not xs:
        return np.zeros((0, window, len(FEATURES))), np.zeros(0)
    return np.stack(xs), np.asarray(ys, dtype=float)


def make_dataset(rows: Sequence[Mapping], window: int = 10, horizon: int = 1, *,
                 train_fraction: float = 8.0 / 9.0, missing_target: Optional[float] = None,
                 kind: Optional[str] = None) -> Dataset:
    """Pair each length-``window`` history with the AoI ``horizon`` cycles later.

    Histories never span a gap in a node's trace. When the node stops
    reporting before the target cycle (it left coverage), the example is
    labelled ``missing_target`` or dropped if that is None.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if window < 1:
        raise ValueError("window must be >= 1")
    if kind is not None:
        rows = [r for r in rows if r.get("kind", "sensor") == kind]
    if len(rows) < window + horizon:
        raise TraceTooShort(f"trace has {len(rows)} rows, need at least window + horizon = {window + horizon}")
    train_rows, test_rows = split_rows(rows, train_fraction)
    X_train, y_train = _windows(train_rows, window, horizon, missing_target)
    X_test, y_test = _windows(test_rows, window, horizon, missing_target)
    return Dataset(X_train, y_train, X_test, y_test, window, horizon, len(train_rows), len(test_rows))


def from_arrays(X: np.ndarray, y: np.ndarray, horizon: int = 1, test_fraction: float = 0.0) -> Dataset:
    """Wrap already-windowed arrays (used for synthetic experiments)."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 2:
        X = X[:, None, :]
    y = np.asarray(y, dtype=float)
    cut = len(y) - int(round(len(y) * test_fraction))
    return Dataset(X[:cut], y[:cut], X[cut:], y[cut:], X.shape[1], horizon, cut, len(y) - cut)
