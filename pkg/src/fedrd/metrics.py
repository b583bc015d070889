"""Ranking metrics."""

from __future__ import annotations

import numpy as np

from .exceptions import ShapeError, UndefinedMetricError


def auprc(scores, labels) -> float:
    """Average precision: sum over ranks of (recall gain) * precision.

    Scores are ranked descending with a stable sort, so ties keep their
    original order.
    """
    s = np.asarray(scores, dtype=float).ravel()
    y = np.asarray(labels).ravel()
    if s.shape != y.shape:
        raise ShapeError("scores and labels differ in length")
    n_pos = int(np.sum(y == 1))
    if n_pos == 0:
        raise UndefinedMetricError("average precision needs at least one positive label")
    order = np.argsort(-s, kind="stable")
    hits = (y[order] == 1).astype(float)
    tp = np.cumsum(hits)
    precision = tp / np.arange(1, len(s) + 1)
    return float(np.sum(precision * hits) / n_pos)
