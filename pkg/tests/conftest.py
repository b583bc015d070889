import numpy as np
import pytest

from fedrd import rng as rng_mod
from fedrd.data import GenConfig, Standardizer, generate, split


def small_dataset(n=512, n_banks=2, accounts_per_bank=40, seed=0, **kw):
    rate = kw.pop("positive_rate", 0.05)
    return generate(GenConfig(n_transactions=n, n_banks=n_banks, accounts_per_bank=accounts_per_bank,
                              d_t=4, d_b=3, positive_rate=rate, seed=seed, **kw))


def prepared(ds, seed=0, test_fraction=0.25):
    train, test = split(ds, test_fraction, rng_mod.stream(seed, rng_mod.SPLIT))
    scaler = Standardizer().fit(train)
    return scaler.transform(train), scaler.transform(test)


@pytest.fixture
def tiny():
    return small_dataset()


@pytest.fixture
def tiny_split(tiny):
    return prepared(tiny)


@pytest.fixture
def gen():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        terminalreporter.write_line(results[number])
