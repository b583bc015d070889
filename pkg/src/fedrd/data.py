"""Relational transaction/account datasets.

A :class:`RelationalDataset` keeps transactions and accounts in flat numpy
arrays; transactions reference accounts by row index, and every account
belongs to exactly one bank, so the bank partition is a true partition.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import rng as rng_mod
from .exceptions import GenerationError, IntegrityError, ParameterError, ParseError


@dataclass(frozen=True, eq=False)
class RelationalDataset:
    txn_ids: np.ndarray
    sender: np.ndarray
    receiver: np.ndarray
    X_T: np.ndarray
    y: np.ndarray
    account_ids: np.ndarray
    bank: np.ndarray  # 0-based bank index per account
    X_B: np.ndarray
    n_banks: int
    _mt: list = field(default_factory=list, repr=False)

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def d_t(self) -> int:
        return self.X_T.shape[1]

    @property
    def d_b(self) -> int:
        return self.X_B.shape[1]

    @property
    def n_accounts(self) -> int:
        return len(self.account_ids)

    @property
    def max_txn_per_account(self) -> int:
        if not self._mt:
            self._mt.append(compute_mt(self))
        return self._mt[0]

    def bank_accounts(self, bank: int) -> np.ndarray:
        return np.flatnonzero(self.bank == bank)

    def validate(self) -> None:
        n, a = len(self.y), len(self.account_ids)
        if not (len(self.txn_ids) == len(self.sender) == len(self.receiver) == self.X_T.shape[0] == n):
            raise IntegrityError("transaction arrays have inconsistent lengths")
        if not (len(self.bank) == self.X_B.shape[0] == a):
            raise IntegrityError("account arrays have inconsistent lengths")
        if len(set(self.account_ids.tolist())) != a:
            raise IntegrityError("duplicate account id")
        for name, ref in (("sender", self.sender), ("receiver", self.receiver)):
            bad = np.flatnonzero((ref < 0) | (ref >= a))
            if bad.size:
                raise IntegrityError(f"transaction row {bad[0]} has an unknown {name} account")
        if self.n_banks < 1 or np.any((self.bank < 0) | (self.bank >= self.n_banks)):
            raise IntegrityError("account bank id outside [1, K]")
        if not np.isin(self.y, (0, 1)).all():
            raise IntegrityError("labels must be 0 or 1")
        if not (np.isfinite(self.X_T).all() and np.isfinite(self.X_B).all()):
            raise IntegrityError("non-finite feature value")

    def subset(self, idx: np.ndarray) -> "RelationalDataset":
        """Transactions ``idx`` with the full account silo."""
        idx = np.asarray(idx)
        return replace(
            self,
            txn_ids=self.txn_ids[idx],
            sender=self.sender[idx],
            receiver=self.receiver[idx],
            X_T=self.X_T[idx],
            y=self.y[idx],
            _mt=[],
        )

    def equals(self, other: "RelationalDataset") -> bool:
        return (
            self.n_banks == other.n_banks
            and all(
                np.array_equal(getattr(self, f), getattr(other, f))
                for f in ("txn_ids", "sender", "receiver", "X_T", "y", "account_ids", "bank", "X_B")
            )
        )


@dataclass(frozen=True)
class GenConfig:
    n_transactions: int = 20_000
    n_banks: int = 4
    accounts_per_bank: int = 250
    d_t: int = 8
    d_b: int = 6
    positive_rate: float = 0.01
    txn_signal: float = 2.0
    account_signal: float = 2.0
    txn_label_shift: float = 0.0
    allow_same_bank: bool = False
    seed: int = 0

    def validate(self) -> None:
        if self.n_transactions < 1 or self.d_t < 1 or self.d_b < 1:
            raise GenerationError("transaction count and feature widths must be positive")
        if self.n_banks < 2 and not self.allow_same_bank:
            raise GenerationError("cross-bank transactions need at least two banks")
        if self.n_banks < 1 or self.accounts_per_bank < 1:
            raise GenerationError("generator needs at least one account")
        if self.allow_same_bank and self.n_banks * self.accounts_per_bank < 2:
            raise GenerationError("need two accounts to form a transaction")
        if not 0.0 < self.positive_rate < 1.0:
            raise GenerationError("positive rate must lie in (0, 1)")
        if self.positive_rate * self.n_transactions < 1:
            raise GenerationError("positive rate times N is below one transaction")
        if min(self.txn_signal, self.account_signal, self.txn_label_shift) < 0:
            raise GenerationError("signal strengths must be non-negative")


def _unit(gen: np.random.Generator, d: int) -> np.ndarray:
    w = gen.normal(size=d)
    return w / np.linalg.norm(w)


def generate(cfg: GenConfig) -> RelationalDataset:
    """Synthetic relational data with label signal on both sides.

    Each account gets a latent riskiness that is linear in its features; each
    transaction's anomaly logit is its own linear score plus the riskiness of
    both endpoints. Labels are the top ``round(rate * N)`` transactions by
    logit plus logistic noise, which fixes the positive count exactly.
    """
    cfg.validate()
    gen = rng_mod.stream(cfg.seed, rng_mod.DATA)
    k, apb, n = cfg.n_banks, cfg.accounts_per_bank, cfg.n_transactions
    n_acc = k * apb

    X_B = gen.normal(size=(n_acc, cfg.d_b))
    bank = np.repeat(np.arange(k), apb)
    risk = cfg.account_signal * (X_B @ _unit(gen, cfg.d_b))

    sender = gen.integers(0, n_acc, size=n)
    if cfg.allow_same_bank:
        # any account other than the sender
        receiver = (sender + gen.integers(1, n_acc, size=n)) % n_acc
    else:
        other_bank = (bank[sender] + gen.integers(1, k, size=n)) % k
        receiver = other_bank * apb + gen.integers(0, apb, size=n)

    Z = gen.normal(size=(n, cfg.d_t))
    logit = cfg.txn_signal * (Z @ _unit(gen, cfg.d_t)) + risk[sender] + risk[receiver]
    u = gen.uniform(1e-12, 1.0 - 1e-12, size=n)
    latent = logit + np.log(u / (1.0 - u))
    n_pos = int(round(cfg.positive_rate * n))
    y = np.zeros(n, dtype=np.int64)
    y[np.argsort(-latent, kind="stable")[:n_pos]] = 1
    X_T = Z + cfg.txn_label_shift * y[:, None] * _unit(gen, cfg.d_t)

    return RelationalDataset(
        txn_ids=np.array([f"T{i}" for i in range(n)]),
        sender=sender.astype(np.int64),
        receiver=receiver.astype(np.int64),
        X_T=X_T,
        y=y,
        account_ids=np.array([f"A{i}" for i in range(n_acc)]),
        bank=bank.astype(np.int64),
        X_B=X_B,
        n_banks=k,
    )


def compute_mt(ds: RelationalDataset) -> int:
    """Largest number of transactions any single account takes part in."""
    counts = np.bincount(ds.sender, minlength=ds.n_accounts) + np.bincount(
        ds.receiver, minlength=ds.n_accounts
    )
    return int(counts.max()) if counts.size else 0


# --- CSV -------------------------------------------------------------------

def _feature_header(prefix_cols: list[str], header: list[str], path) -> int:
    if header[: len(prefix_cols)] != prefix_cols:
        raise ParseError(f"{path}: header must start with {','.join(prefix_cols)}", line=1)
    feats = header[len(prefix_cols):]
    if feats != [f"f{j}" for j in range(len(feats))]:
        raise ParseError(f"{path}: feature columns must be named f0..f{{d-1}}", line=1)
    return len(feats)


def _floats(row: list[str], start: int, path, line: int) -> list[float]:
    try:
        vals = [float(v) for v in row[start:]]
    except ValueError:
        raise ParseError(f"{path}:{line}: non-numeric feature value", line=line) from None
    if not all(math.isfinite(v) for v in vals):
        raise ParseError(f"{path}:{line}: non-finite feature value", line=line)
    return vals


def load_csv(transactions_path, accounts_path) -> RelationalDataset:
    """Read the two-file CSV layout and enforce referential integrity."""
    acct_ids, banks, xb = [], [], []
    index: dict[str, int] = {}
    with open(accounts_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ParseError(f"{accounts_path}: missing header", line=1)
        d_b = _feature_header(["account_id", "bank_id"], header, accounts_path)
        for line, row in enumerate(reader, start=2):
            if len(row) != 2 + d_b:
                raise ParseError(f"{accounts_path}:{line}: expected {2 + d_b} fields", line=line)
            aid = row[0]
            if aid in index:
                raise IntegrityError(f"{accounts_path}:{line}: duplicate account id {aid!r}")
            try:
                bid = int(row[1])
            except ValueError:
                raise ParseError(f"{accounts_path}:{line}: non-integer bank id", line=line) from None
            if bid < 1:
                raise IntegrityError(f"{accounts_path}:{line}: bank id must be >= 1")
            index[aid] = len(acct_ids)
            acct_ids.append(aid)
            banks.append(bid - 1)
            xb.append(_floats(row, 2, accounts_path, line))

    tids, snd, rcv, labels, xt = [], [], [], [], []
    with open(transactions_path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ParseError(f"{transactions_path}: missing header", line=1)
        d_t = _feature_header(["txn_id", "sender_id", "receiver_id", "label"], header, transactions_path)
        for line, row in enumerate(reader, start=2):
            if len(row) != 4 + d_t:
                raise ParseError(f"{transactions_path}:{line}: expected {4 + d_t} fields", line=line)
            for col, aid in (("sender", row[1]), ("receiver", row[2])):
                if aid not in index:
                    raise IntegrityError(
                        f"{transactions_path}:{line}: transaction {row[0]!r} references "
                        f"unknown {col} account {aid!r}"
                    )
            if row[3] not in ("0", "1"):
                raise ParseError(f"{transactions_path}:{line}: label must be 0 or 1", line=line)
            tids.append(row[0])
            snd.append(index[row[1]])
            rcv.append(index[row[2]])
            labels.append(int(row[3]))
            xt.append(_floats(row, 4, transactions_path, line))

    ds = RelationalDataset(
        txn_ids=np.array(tids),
        sender=np.array(snd, dtype=np.int64),
        receiver=np.array(rcv, dtype=np.int64),
        X_T=np.array(xt, dtype=float).reshape(len(tids), d_t),
        y=np.array(labels, dtype=np.int64),
        account_ids=np.array(acct_ids),
        bank=np.array(banks, dtype=np.int64),
        X_B=np.array(xb, dtype=float).reshape(len(acct_ids), d_b),
        n_banks=max(banks) + 1 if banks else 0,
    )
    ds.validate()
    return ds


def write_csv(ds: RelationalDataset, transactions_path, accounts_path) -> None:
    """Write ``ds`` so that :func:`load_csv` reproduces it exactly."""
    Path(transactions_path).parent.mkdir(parents=True, exist_ok=True)
    Path(accounts_path).parent.mkdir(parents=True, exist_ok=True)
    with open(accounts_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["account_id", "bank_id"] + [f"f{j}" for j in range(ds.d_b)])
        for aid, bid, row in zip(ds.account_ids, ds.bank, ds.X_B):
            w.writerow([aid, int(bid) + 1, *map(repr, row.tolist())])
    with open(transactions_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["txn_id", "sender_id", "receiver_id", "label"] + [f"f{j}" for j in range(ds.d_t)])
        for i in range(ds.n):
            w.writerow(
                [ds.txn_ids[i], ds.account_ids[ds.sender[i]], ds.account_ids[ds.receiver[i]],
                 int(ds.y[i]), *map(repr, ds.X_T[i].tolist())]
            )


# --- sampling --------------------------------------------------------------

@dataclass(frozen=True)
class Batch:
    idx: np.ndarray
    X_T: np.ndarray
    sender: np.ndarray
    receiver: np.ndarray
    y: np.ndarray

    def __len__(self) -> int:
        return len(self.idx)


def take_batch(ds: RelationalDataset, idx: np.ndarray) -> Batch:
    return Batch(idx, ds.X_T[idx], ds.sender[idx], ds.receiver[idx], ds.y[idx])


def sample_minibatch(ds: RelationalDataset, batch_size: int, rng: np.random.Generator) -> Iterator[Batch]:
    """Yield one epoch of minibatches from a shuffled transaction order.

    Every transaction appears exactly once; the final batch is short when
    ``batch_size`` does not divide N.
    """
    if not 1 <= batch_size <= ds.n:
        raise ParameterError(f"batch size must lie in [1, {ds.n}], got {batch_size}")
    order = rng.permutation(ds.n)
    for start in range(0, ds.n, batch_size):
        yield take_batch(ds, order[start : start + batch_size])


def split(ds: RelationalDataset, test_fraction: float = 0.2, rng: np.random.Generator | None = None,
          stratify: bool = True) -> tuple[RelationalDataset, RelationalDataset]:
    if not 0.0 < test_fraction < 1.0:
        raise ParameterError("test fraction must lie in (0, 1)")
    rng = rng if rng is not None else np.random.default_rng(0)
    if stratify:
        test_idx = []
        for label in (0, 1):
            members = np.flatnonzero(ds.y == label)
            n_test = int(round(test_fraction * len(members)))
            test_idx.append(rng.permutation(members)[:n_test])
        test_idx = np.concatenate(test_idx)
    else:
        test_idx = rng.permutation(ds.n)[: int(round(test_fraction * ds.n))]
    mask = np.zeros(ds.n, dtype=bool)
    mask[test_idx] = True
    if mask.all() or not mask.any():
        raise ParameterError("split leaves one side empty")
    return ds.subset(np.flatnonzero(~mask)), ds.subset(np.flatnonzero(mask))


class Standardizer(TransformerMixin, BaseEstimator):
    """Zero-mean, unit-variance scaling of transaction and account features.

    Transaction statistics come from the fitted (training) transactions;
    account statistics from the full account silo.
    """

    def fit(self, X: RelationalDataset, y=None):
        self.txn_mean_ = X.X_T.mean(axis=0)
        self.txn_scale_ = _safe_scale(X.X_T.std(axis=0))
        self.acct_mean_ = X.X_B.mean(axis=0)
        self.acct_scale_ = _safe_scale(X.X_B.std(axis=0))
        return self

    def transform(self, X: RelationalDataset) -> RelationalDataset:
        check_is_fitted(self, "txn_mean_")
        return replace(
            X,
            X_T=(X.X_T - self.txn_mean_) / self.txn_scale_,
            X_B=(X.X_B - self.acct_mean_) / self.acct_scale_,
            _mt=[],
        )


def _safe_scale(s: np.ndarray) -> np.ndarray:
    return np.where(s > 0, s, 1.0)
