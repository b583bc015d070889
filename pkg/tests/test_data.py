import numpy as np
import pytest

from fedrd import rng as rng_mod
from fedrd.data import (GenConfig, RelationalDataset, Standardizer, compute_mt, generate, load_csv,
                        sample_minibatch, split, write_csv)
from fedrd.exceptions import GenerationError, IntegrityError, ParameterError, ParseError

ACCOUNTS = """account_id,bank_id,f0,f1
a1,1,0.5,1.0
a2,1,-0.5,2.0
b1,2,1.5,0.0
b2,2,0.25,-1.0
"""
TRANSACTIONS = """txn_id,sender_id,receiver_id,label,f0
t1,a1,b1,0,3.0
t2,b2,a2,1,-1.0
"""


def write_fixture(tmp_path, txns=TRANSACTIONS, accts=ACCOUNTS):
    t, a = tmp_path / "transactions.csv", tmp_path / "accounts.csv"
    t.write_text(txns)
    a.write_text(accts)
    return t, a


def brute_force_mt(ds):
    best = 0
    for acct in range(ds.n_accounts):
        best = max(best, sum(int(s == acct) + int(r == acct) for s, r in zip(ds.sender, ds.receiver)))
    return best


def test_positive_count():
    ds = generate(GenConfig(n_transactions=10_000, positive_rate=0.01, seed=3))
    assert 90 <= int(ds.y.sum()) <= 110


def test_generation_deterministic():
    cfg = GenConfig(n_transactions=2000, seed=5)
    assert generate(cfg).equals(generate(cfg))
    assert not generate(cfg).equals(generate(GenConfig(n_transactions=2000, seed=6)))


def test_generated_dataset_integrity():
    ds = generate(GenConfig(n_transactions=3000, n_banks=3, accounts_per_bank=50, seed=1))
    ds.validate()
    assert np.all(ds.bank[ds.sender] != ds.bank[ds.receiver])
    parts = [set(ds.bank_accounts(k).tolist()) for k in range(ds.n_banks)]
    assert set().union(*parts) == set(range(ds.n_accounts))
    assert sum(len(p) for p in parts) == ds.n_accounts


def test_same_bank_transactions_optional():
    ds = generate(GenConfig(n_transactions=3000, n_banks=2, accounts_per_bank=50, allow_same_bank=True, seed=1))
    assert np.any(ds.bank[ds.sender] == ds.bank[ds.receiver])


def _lr_auprc(ds, relational):
    from sklearn.linear_model import LogisticRegression
    from sklearn.metrics import average_precision_score

    X = ds.X_T
    if relational:
        X = np.hstack([X, ds.X_B[ds.sender], ds.X_B[ds.receiver]])
    cut = int(0.7 * ds.n)
    model = LogisticRegression(max_iter=1000).fit(X[:cut], ds.y[:cut])
    return average_precision_score(ds.y[cut:], model.decision_function(X[cut:]))


@pytest.mark.parametrize("signal,gap", [(0.0, None), (2.0, 0.1)])
def test_account_signal_controls_relational_benefit(signal, gap):
    ds = generate(GenConfig(n_transactions=20000, positive_rate=0.05, account_signal=signal, seed=2))
    diff = _lr_auprc(ds, True) - _lr_auprc(ds, False)
    if gap is None:
        assert abs(diff) < 0.03
    else:
        assert diff > gap


@pytest.mark.parametrize("kw", [dict(n_transactions=0), dict(positive_rate=0.0), dict(n_banks=1),
                                dict(positive_rate=1e-6), dict(txn_signal=-1.0)])
def test_generator_rejects_bad_config(kw):
    with pytest.raises(GenerationError):
        generate(GenConfig(**kw))


def test_hand_fixture_loads(tmp_path):
    ds = load_csv(*write_fixture(tmp_path))
    assert ds.n == 2 and ds.n_accounts == 4 and ds.n_banks == 2
    assert ds.account_ids[ds.sender].tolist() == ["a1", "b2"]
    assert ds.account_ids[ds.receiver].tolist() == ["b1", "a2"]
    assert ds.y.tolist() == [0, 1]
    assert ds.bank.tolist() == [0, 0, 1, 1]
    np.testing.assert_array_equal(ds.X_B[2], [1.5, 0.0])


def test_missing_account_is_integrity_error(tmp_path):
    bad = TRANSACTIONS + "t3,a1,zz,0,1.0\n"
    with pytest.raises(IntegrityError, match="zz"):
        load_csv(*write_fixture(tmp_path, txns=bad))


def test_duplicate_account_is_integrity_error(tmp_path):
    with pytest.raises(IntegrityError, match="duplicate"):
        load_csv(*write_fixture(tmp_path, accts=ACCOUNTS + "a1,2,0.0,0.0\n"))


@pytest.mark.parametrize("txns,line", [
    (TRANSACTIONS + "t3,a1,b1,0,abc\n", 4),
    (TRANSACTIONS + "t3,a1,b1,2,1.0\n", 4),
    (TRANSACTIONS + "t3,a1,b1,0\n", 4),
    ("txn,sender_id,receiver_id,label,f0\n", 1),
])
def test_parse_errors_carry_line(tmp_path, txns, line):
    with pytest.raises(ParseError) as info:
        load_csv(*write_fixture(tmp_path, txns=txns))
    assert info.value.line == line


def test_csv_round_trip(tmp_path):
    ds = generate(GenConfig(n_transactions=500, accounts_per_bank=30, seed=2))
    write_csv(ds, tmp_path / "t.csv", tmp_path / "a.csv")
    back = load_csv(tmp_path / "t.csv", tmp_path / "a.csv")
    # ids round-trip as strings
    assert back.txn_ids.astype(str).tolist() == ds.txn_ids.astype(str).tolist()
    for f in ("sender", "receiver", "X_T", "y", "bank", "X_B"):
        assert np.array_equal(getattr(back, f), getattr(ds, f)), f


def _ds(sender, receiver, n_accounts=4):
    n = len(sender)
    return RelationalDataset(
        txn_ids=np.arange(n), sender=np.array(sender), receiver=np.array(receiver),
        X_T=np.zeros((n, 1)), y=np.zeros(n, dtype=np.int64), account_ids=np.arange(n_accounts),
        bank=np.arange(n_accounts) % 2, X_B=np.zeros((n_accounts, 1)), n_banks=2)


def test_mt_examples():
    assert compute_mt(_ds([0, 1], [2, 3])) == 1
    # account 0 sends 3 and receives 2
    assert compute_mt(_ds([0, 0, 0, 1, 3], [1, 2, 3, 0, 0])) == 5


@pytest.mark.parametrize("seed", range(5))
def test_mt_matches_brute_force(seed):
    ds = generate(GenConfig(n_transactions=400, accounts_per_bank=15, seed=seed))
    assert ds.max_txn_per_account == brute_force_mt(ds)


def test_full_batch_is_permutation(tiny):
    batches = list(sample_minibatch(tiny, tiny.n, np.random.default_rng(0)))
    assert len(batches) == 1
    assert sorted(batches[0].idx.tolist()) == list(range(tiny.n))


def test_epoch_covers_each_transaction_once(tiny):
    idx = np.concatenate([b.idx for b in sample_minibatch(tiny, 100, np.random.default_rng(1))])
    assert sorted(idx.tolist()) == list(range(tiny.n))


def test_batches_deterministic(tiny):
    one = [b.idx.tolist() for b in sample_minibatch(tiny, 64, rng_mod.stream(3, rng_mod.BATCH, 1))]
    two = [b.idx.tolist() for b in sample_minibatch(tiny, 64, rng_mod.stream(3, rng_mod.BATCH, 1))]
    assert one == two


def test_batch_larger_than_dataset_rejected(tiny):
    with pytest.raises(ParameterError):
        next(sample_minibatch(tiny, tiny.n + 1, np.random.default_rng(0)))


def test_split_sizes():
    ds = _ds([0] * 10, [1] * 10)
    train, test = split(ds, 0.2, np.random.default_rng(0), stratify=False)
    assert (train.n, test.n) == (8, 2)
    assert sorted(train.txn_ids.tolist() + test.txn_ids.tolist()) == list(range(10))


def test_stratified_split_proportions():
    ds = generate(GenConfig(n_transactions=5000, positive_rate=0.02, seed=4))
    train, test = split(ds, 0.2, np.random.default_rng(0))
    pos = int(ds.y.sum())
    assert abs(int(test.y.sum()) - 0.2 * pos) <= 1
    assert int(train.y.sum()) + int(test.y.sum()) == pos


def test_standardization(tiny_split):
    train, test = tiny_split
    for X in (train.X_T, train.X_B):
        assert np.all(np.abs(X.mean(axis=0)) < 1e-6)
        assert np.all(np.abs(X.var(axis=0) - 1) < 1e-6)
    # the test side reuses training statistics rather than its own
    assert not np.allclose(test.X_T.mean(axis=0), 0, atol=1e-6)


def test_standardizer_sklearn_params():
    assert Standardizer().get_params() == {}
