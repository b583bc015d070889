import numpy as np
import pytest
from scipy import stats

from fedrd.exceptions import InsufficientPartiesError, RingOverflowError, ShapeError
from fedrd.secagg import MaskedMessage, RingConfig, message_bits, secure_sum


def plain_random_instance(gen):
    m = int(gen.choice([2, 3, 8]))
    length = int(gen.integers(1, 33))
    bound = int(gen.integers(1, 2000))
    inputs = [gen.integers(0, bound + 1, size=length) for _ in range(m)]
    return inputs, bound


def test_two_party_example():
    total, _ = secure_sum([np.array([3]), np.array([5])], RingConfig(64), np.random.default_rng(0))
    assert total.tolist() == [8]


def test_zero_inputs_sum_to_zero():
    total, trace = secure_sum([np.zeros(16, dtype=np.int64)] * 3, RingConfig(256), np.random.default_rng(1))
    assert not total.any()
    assert any(m.values.any() for m in trace)


def test_matches_plain_sum_on_random_instances():
    gen = np.random.default_rng(2024)
    for _ in range(1000):
        inputs, bound = plain_random_instance(gen)
        ring = RingConfig.for_max_sum(len(inputs) * bound)
        total, _ = secure_sum(inputs, ring, gen, bounds=bound)
        assert np.array_equal(total, np.sum(inputs, axis=0))


def test_masks_cancel():
    gen = np.random.default_rng(3)
    ring = RingConfig(1024)
    inputs = [gen.integers(0, 100, size=10) for _ in range(5)]
    _, trace = secure_sum(inputs, ring, gen, bounds=100)
    masks = [(m.values - x) % ring.modulus for m, x in zip(trace, inputs)]
    assert not (np.sum(masks, axis=0) % ring.modulus).any()


def test_masked_message_is_uniform():
    r = 64
    ring = RingConfig(r)
    gen = np.random.default_rng(4)
    n = 100_000
    # one fixed single-component input, fresh masks per trial
    _, trace = secure_sum([np.full(n, 7), np.full(n, 20), np.full(n, 3)], ring, gen, bounds=21)
    for msg in trace:
        counts = np.bincount(msg.values, minlength=r)
        assert stats.chisquare(counts).pvalue > 0.001


def test_message_bits_examples():
    assert message_bits(MaskedMessage(0, np.zeros(64)), RingConfig(3 * 64)) == 512
    assert message_bits(MaskedMessage(0, np.zeros(1)), RingConfig(2)) == 1
    for c in range(1, 20):
        assert message_bits(MaskedMessage(0, np.zeros(16)), RingConfig(2**c)) == 16 * c


def test_for_max_sum_is_smallest_power_of_two_above():
    for m in range(1, 5000):
        r = RingConfig.for_max_sum(m).modulus
        assert r > m and r & (r - 1) == 0 and r // 2 <= m


def test_errors():
    gen = np.random.default_rng(0)
    with pytest.raises(InsufficientPartiesError):
        secure_sum([np.array([1])], RingConfig(8), gen)
    with pytest.raises(ShapeError):
        secure_sum([np.array([1]), np.array([1, 2])], RingConfig(8), gen)
    with pytest.raises(RingOverflowError):
        secure_sum([np.array([4]), np.array([4])], RingConfig(8), gen, bounds=4)
