"""scikit-learn style estimators.

:class:`FedRDClassifier` trains the federated relational model on a
:class:`~fedrd.data.RelationalDataset`; :class:`TransactionOnlyClassifier`
is the centralized baseline that only sees transaction features and works on
plain arrays, so it drops into pipelines and model selection tools.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.preprocessing import StandardScaler
from sklearn.utils.validation import check_is_fitted

from . import nn
from . import rng as rng_mod
from .data import RelationalDataset, Standardizer
from .metrics import auprc
from .training import TrainConfig, predict_scores, run_training
from .validation import check_binary_labels, check_features, check_relational


class FedRDClassifier(ClassifierMixin, BaseEstimator):
    """Federated transaction/account/fusion model.

    ``X`` is a :class:`RelationalDataset`; labels are read from it, so ``y``
    is ignored. ``approach`` is ``"concatenation"``, ``"summation"`` or
    ``"none"`` (no privacy; ``fusion`` then picks the fusion input layout).
    After fitting, ``report_`` holds the per-epoch curves, communication
    ledger and privacy budget estimate.
    """

    def __init__(self, approach="summation", fusion="summation", epochs=10, batch_size=128,
                 embedding_size=64, hidden=(128, 64), fusion_hidden=32, learning_rate=1e-3,
                 optimizer="adam", sigma2=None, bins=64, beta=0.25, clip=1.0, grad_bins=1024,
                 grad_beta=None, quantize_gradients=True, active_party="transaction",
                 eval_mechanism=True, standardize=True, alphas=(2.0,), random_state=0,
                 n_jobs=1, audit=False):
        self.approach = approach
        self.fusion = fusion
        self.epochs = epochs
        self.batch_size = batch_size
        self.embedding_size = embedding_size
        self.hidden = hidden
        self.fusion_hidden = fusion_hidden
        self.learning_rate = learning_rate
        self.optimizer = optimizer
        self.sigma2 = sigma2
        self.bins = bins
        self.beta = beta
        self.clip = clip
        self.grad_bins = grad_bins
        self.grad_beta = grad_beta
        self.quantize_gradients = quantize_gradients
        self.active_party = active_party
        self.eval_mechanism = eval_mechanism
        self.standardize = standardize
        self.alphas = alphas
        self.random_state = random_state
        self.n_jobs = n_jobs
        self.audit = audit

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            approach=self.approach, fusion=self.fusion, epochs=self.epochs,
            batch_size=self.batch_size, embedding_size=self.embedding_size,
            hidden=tuple(self.hidden), fusion_hidden=self.fusion_hidden,
            learning_rate=self.learning_rate, optimizer=self.optimizer, sigma2=self.sigma2,
            bins=self.bins, beta=self.beta, clip=self.clip, grad_bins=self.grad_bins,
            grad_beta=self.grad_beta, quantize_gradients=self.quantize_gradients,
            active_party=self.active_party, eval_mechanism=self.eval_mechanism,
            alphas=tuple(self.alphas), audit=self.audit, seed=int(self.random_state or 0),
            n_jobs=self.n_jobs,
        )

    def _prepare(self, X: RelationalDataset) -> RelationalDataset:
        return self.standardizer_.transform(X) if self.standardizer_ is not None else X

    def fit(self, X, y=None, eval_set=None):
        X = check_relational(X)
        self.standardizer_ = Standardizer().fit(X) if self.standardize else None
        test = self._prepare(check_relational(eval_set)) if eval_set is not None else None
        self.config_ = self.train_config()
        self.report_ = run_training(self.config_, self._prepare(X), test)
        self.bundle_ = self.report_.bundle
        self.classes_ = np.array([0, 1])
        return self

    def decision_function(self, X) -> np.ndarray:
        check_is_fitted(self, "bundle_")
        X = check_relational(X)
        return predict_scores(self.bundle_, self._prepare(X), self.config_)

    def predict_proba(self, X) -> np.ndarray:
        p = self.decision_function(X)
        return np.column_stack([1.0 - p, p])

    def predict(self, X) -> np.ndarray:
        return (self.decision_function(X) >= 0.5).astype(np.int64)

    def score(self, X, y=None, sample_weight=None) -> float:
        """Average precision on ``X``'s labels."""
        return auprc(self.decision_function(X), X.y)


class TransactionOnlyClassifier(ClassifierMixin, BaseEstimator):
    """Centralized baseline: transaction model plus fusion head, no account data."""

    def __init__(self, epochs=10, batch_size=128, embedding_size=64, hidden=(128, 64),
                 fusion_hidden=32, learning_rate=1e-3, optimizer="adam", standardize=True,
                 random_state=0):
        self.epochs = epochs
        self.batch_size = batch_size
        self.embedding_size = embedding_size
        self.hidden = hidden
        self.fusion_hidden = fusion_hidden
        self.learning_rate = learning_rate
        self.optimizer = optimizer
        self.standardize = standardize
        self.random_state = random_state

    def fit(self, X, y, eval_set=None):
        """Train; ``eval_set=(X_test, y_test)`` records ``auprc_curve_`` per epoch."""
        X = check_features(X)
        y = check_binary_labels(y, X.shape[0])
        seed = int(self.random_state or 0)
        self.scaler_ = StandardScaler().fit(X) if self.standardize else None
        Xs = self._scale(X)
        self.n_features_in_ = X.shape[1]
        self.classes_ = np.array([0, 1])
        self.body_ = nn.build_model(nn.embedding_spec(X.shape[1], self.embedding_size, self.hidden), seed * 3)
        self.head_ = nn.build_model(nn.fusion_spec(self.embedding_size, self.fusion_hidden), seed * 3 + 2)
        opt_body = nn.Optimizer(self.optimizer, self.learning_rate)
        opt_head = nn.Optimizer(self.optimizer, self.learning_rate)
        self.loss_curve_, self.auprc_curve_ = [], []
        b = min(self.batch_size, len(y))
        for epoch in range(1, self.epochs + 1):
            order = rng_mod.stream(seed, rng_mod.BATCH, epoch).permutation(len(y))
            losses = []
            for start in range(0, len(y), b):
                idx = order[start : start + b]
                e, tape_body = nn.forward(self.body_, Xs[idx])
                pred, tape_head = nn.forward(self.head_, e)
                loss, dpred = nn.bce_loss(pred[:, 0], y[idx])
                losses.append(float(loss.mean()))
                g_head, de = nn.backward(self.head_, tape_head, (dpred / len(idx))[:, None])
                g_body, _ = nn.backward(self.body_, tape_body, de)
                opt_head.step(self.head_, g_head)
                opt_body.step(self.body_, g_body)
            self.loss_curve_.append(float(np.mean(losses)))
            if eval_set is not None:
                self.auprc_curve_.append(auprc(self.decision_function(eval_set[0]), eval_set[1]))
        return self

    def _scale(self, X):
        return self.scaler_.transform(X) if self.scaler_ is not None else X

    def decision_function(self, X) -> np.ndarray:
        check_is_fitted(self, "body_")
        X = self._scale(check_features(X, self.n_features_in_))
        e, _ = nn.forward(self.body_, X)
        pred, _ = nn.forward(self.head_, e)
        return pred[:, 0]

    def predict_proba(self, X) -> np.ndarray:
        p = self.decision_function(X)
        return np.column_stack([1.0 - p, p])

    def predict(self, X) -> np.ndarray:
        return (self.decision_function(X) >= 0.5).astype(np.int64)

    def score(self, X, y, sample_weight=None) -> float:
        """Average precision."""
        return auprc(self.decision_function(X), y)
