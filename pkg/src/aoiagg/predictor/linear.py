"""Ordinary least squares on flattened windows, solved in closed form."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

RIDGE_FALLBACK = 1e-8


def flatten(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    return X.reshape(len(X), -1) if X.ndim > 2 else X


@dataclass
class LinearRegression:
    """y = intercept + X @ coef, fit via the normal equations.

    Features are standardized before solving for numerical stability; the
    reported ``coef`` and ``intercept`` are mapped back to raw units. When
    the Gram matrix is singular a tiny ridge term is added.
    """
    coef: Optional[np.ndarray] = None
    intercept: float = 0.0
    ridge_used: bool = False
    mean_: Optional[np.ndarray] = field(default=None, repr=False)
    scale_: Optional[np.ndarray] = field(default=None, repr=False)

    def fit(self, X: np.ndarray, y: np.ndarray) -> "LinearRegression":
        X = flatten(X)
        y = np.asarray(y, dtype=float)
        if len(X) != len(y) or len(y) == 0:
            raise ValueError("X and y must be non-empty and of equal length")
        mean = X.mean(axis=0)
        scale = X.std(axis=0)
        scale[scale == 0] = 1.0
        Z = (X - mean) / scale
        y_mean = y.mean()
        gram = Z.T @ Z
        rhs = Z.T @ (y - y_mean)
        self.ridge_used = False
        try:
            if np.linalg.matrix_rank(gram) < gram.shape[0]:
                raise np.linalg.LinAlgError("singular")
            w = np.linalg.solve(gram, rhs)
        except np.linalg.LinAlgError:
            self.ridge_used = True
            w = np.linalg.solve(gram + RIDGE_FALLBACK * len(y) * np.eye(len(gram)), rhs)
        self.mean_, self.scale_ = mean, scale
        self.coef = w / scale
        self.intercept = float(y_mean - mean @ self.coef)
        return self

    def predict(self, X: np.ndarray) -> np.ndarray:
        if self.coef is None:
            raise RuntimeError("model is not fitted")
        return flatten(X) @ self.coef + self.intercept

    @property
    def n_params(self) -> int:
        return 0 if self.coef is None else len(self.coef) + 1

    def get_params(self) -> Dict[str, np.ndarray]:
        return {"coef": self.coef, "intercept": np.array([self.intercept])}

    @classmethod
    def from_params(cls, params: Dict[str, np.ndarray]) -> "LinearRegression":
        return cls(coef=np.asarray(params["coef"], dtype=float), intercept=float(params["intercept"][0]))
