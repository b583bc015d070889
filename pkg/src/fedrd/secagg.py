"""Simulated secure summation with pairwise additive masks.

Only the mask-cancellation arithmetic is simulated: masks come from the
simulator's seeded streams, not from key agreement between parties.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .exceptions import InsufficientPartiesError, ParameterError, RingOverflowError, ShapeError


@dataclass(frozen=True)
class RingConfig:
    modulus: int

    def __post_init__(self):
        if int(self.modulus) != self.modulus or self.modulus < 2:
            raise ParameterError(f"ring modulus must be an integer >= 2, got {self.modulus}")

    @property
    def bits(self) -> int:
        """Width of one ring element, ``ceil(log2(modulus))``."""
        return (int(self.modulus) - 1).bit_length()

    @classmethod
    def for_max_sum(cls, max_sum: int) -> "RingConfig":
        """Smallest power-of-two ring that holds every value in ``[0, max_sum]``."""
        return cls(1 << int(max_sum).bit_length())


@dataclass(frozen=True)
class MaskedMessage:
    sender: int
    values: np.ndarray


def message_bits(msg: MaskedMessage, ring: RingConfig) -> int:
    return int(np.asarray(msg.values).size) * ring.bits


def secure_sum(
    inputs: Sequence[np.ndarray],
    ring: RingConfig,
    rng: np.random.Generator,
    bounds: int | Sequence[int] | None = None,
) -> tuple[np.ndarray, list[MaskedMessage]]:
    """Sum integer arrays so that only the total is revealed.

    Args:
        inputs: one non-negative integer array per party, all the same shape.
        ring: modulus for the masked messages; must exceed the largest
            possible total so the true sum never wraps.
        rng: source for the pairwise masks.
        bounds: largest value each input may hold (one int for all parties or
            one per party). Defaults to the observed maxima.

    Returns:
        The exact componentwise sum and one masked message per party.
    """
    if len(inputs) < 2:
        raise InsufficientPartiesError("secure summation needs at least two parties")
    arrays = [np.asarray(x, dtype=np.int64) for x in inputs]
    shape = arrays[0].shape
    if any(a.shape != shape for a in arrays):
        raise ShapeError("all secure-sum inputs must have the same shape")
    if any(np.any(a < 0) for a in arrays):
        raise ParameterError("secure-sum inputs must be non-negative integers")
    m = len(arrays)
    if bounds is None:
        bounds = [int(a.max()) if a.size else 0 for a in arrays]
    elif np.isscalar(bounds):
        bounds = [int(bounds)] * m
    if len(bounds) != m:
        raise ShapeError("one bound per party expected")
    if any(int(a.max(initial=0)) > bd for a, bd in zip(arrays, bounds)):
        raise ParameterError("secure-sum input exceeds its declared bound")
    if ring.modulus <= sum(bounds):
        raise RingOverflowError(
            f"ring modulus {ring.modulus} does not exceed the maximum total {sum(bounds)}"
        )

    r = ring.modulus
    masked = [a % r for a in arrays]
    for i in range(m):
        for j in range(i + 1, m):
            mask = rng.integers(0, r, size=shape, dtype=np.int64)
            masked[i] = (masked[i] + mask) % r
            masked[j] = (masked[j] - mask) % r
    trace = [MaskedMessage(sender=i, values=masked[i]) for i in range(m)]

    total = np.zeros(shape, dtype=np.int64)
    for msg in trace:
        total = (total + msg.values) % r
    return total, trace
