"""Input checks shared by the estimators and the orchestrator."""

from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array

from .data import RelationalDataset
from .exceptions import ParameterError, ShapeError


def check_relational(X, require_labels: bool = True) -> RelationalDataset:
    if not isinstance(X, RelationalDataset):
        raise TypeError(f"expected a RelationalDataset, got {type(X).__name__}")
    X.validate()
    if require_labels and X.n == 0:
        raise ShapeError("dataset has no transactions")
    return X


def check_features(X, n_features: int | None = None) -> np.ndarray:
    X = check_array(X, dtype=np.float64)
    if n_features is not None and X.shape[1] != n_features:
        raise ShapeError(f"expected {n_features} features, got {X.shape[1]}")
    return X


def check_binary_labels(y, n: int) -> np.ndarray:
    y = np.asarray(y).ravel()
    if len(y) != n:
        raise ShapeError("label count does not match sample count")
    if not np.isin(y, (0, 1)).all():
        raise ParameterError("labels must be 0 or 1")
    return y.astype(np.int64)


def check_fraction(value: float, name: str, low: float = 0.0, high: float = 1.0,
                   closed: bool = False) -> float:
    ok = low <= value <= high if closed else low < value < high
    if not ok:
        raise ParameterError(f"{name} must lie in {'[' if closed else '('}{low}, {high}{']' if closed else ')'}")
    return float(value)
