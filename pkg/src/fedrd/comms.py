"""Communication ledger and closed-form cost model.

The ledger counts integer bits actually put on the wire by the simulator.
The closed forms are the analytic per-channel totals; logs are base 2 and
kept fractional.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass

from .exceptions import ParameterError

CHANNELS = ("fwd_embeddings", "bwd_partials", "bank_masked_grads", "bank_broadcast")
GROUPS = {
    "embedding_exchange": ("fwd_embeddings", "bwd_partials"),
    "gradient_averaging": ("bank_masked_grads", "bank_broadcast"),
}
# upper slack allowed for ceil(log2) ring widths against fractional logs
ENVELOPE = 1.05


class CommLedger:
    def __init__(self, float_bits: int = 32):
        self.float_bits = float_bits
        self._counts: dict[tuple[str, int], int] = defaultdict(int)

    def record(self, channel: str, bits: int, iteration: int) -> "CommLedger":
        if channel not in CHANNELS:
            raise ParameterError(f"unknown channel {channel!r}")
        if bits < 0:
            raise ParameterError("bit counts must be non-negative")
        if bits:
            self._counts[(channel, int(iteration))] += int(bits)
        return self

    def total(self, channel: str | None = None) -> int:
        return sum(v for (c, _), v in self._counts.items() if channel is None or c == channel)

    def totals(self) -> dict[str, int]:
        return {c: self.total(c) for c in CHANNELS}

    def per_iteration(self, channel: str) -> dict[int, int]:
        return {it: v for (c, it), v in sorted(self._counts.items()) if c == channel}

    def iterations_total(self, iterations, channel: str) -> int:
        it = set(iterations)
        return sum(v for (c, i), v in self._counts.items() if c == channel and i in it)


def closed_form(
    approach: str,
    iterations: int,
    batch_size: int,
    embedding_size: int,
    bins: int,
    grad_bins: int,
    n_banks: int,
    account_model_size: int,
    float_bits: int = 32,
    sample_total: float | None = None,
) -> dict[str, float]:
    """Analytic bits per channel.

    ``sample_total`` replaces ``iterations * batch_size`` when the last
    batch of an epoch is short.
    """
    if approach not in ("concatenation", "summation"):
        raise ParameterError(f"no closed form for approach {approach!r}")
    qb = iterations * batch_size if sample_total is None else sample_total
    p, f, k = embedding_size, float_bits, n_banks
    if approach == "concatenation":
        fwd = 3 * qb * p * f
    else:
        fwd = 3 * qb * p * (math.log2(3) + math.log2(bins))
    return {
        "fwd_embeddings": fwd,
        "bwd_partials": 3 * qb * p * f,
        "bank_masked_grads": iterations * k * account_model_size * (math.log2(grad_bins) + math.log2(k)),
        "bank_broadcast": iterations * (k - 1) * account_model_size * f,
    }


def paper_totals(cf: dict[str, float]) -> dict[str, float]:
    """Group channel totals the way the published cost formulas are stated."""
    return {g: sum(cf[c] for c in chans) for g, chans in GROUPS.items()}


def ceil_envelopes(approach: str, bins: int, grad_bins: int, n_banks: int) -> dict[str, float]:
    """Exact upper ratio per ledger channel caused by whole-bit ring elements.

    A sum of M values in ``[0, b]`` needs a ring of at least ``M*b + 1``
    elements, i.e. ``ceil(log2(M*b + 1))`` bits against ``log2(M*b)`` in the
    closed form. Float channels are exact.
    """
    def ratio(max_sum):
        return (int(max_sum).bit_length()) / math.log2(max_sum)

    env = {c: 1.0 for c in CHANNELS}
    if approach == "summation":
        env["fwd_embeddings"] = ratio(3 * bins)
    env["bank_masked_grads"] = ratio(n_banks * grad_bins)
    env.update({g: ENVELOPE for g in GROUPS})
    return env


@dataclass(frozen=True)
class Reconciliation:
    name: str
    measured: float
    expected: float
    ratio: float
    envelope: float
    flagged: bool


def reconcile(ledger: CommLedger | dict, cf: dict[str, float],
              envelopes: dict[str, float] | None = None) -> list[Reconciliation]:
    """Measured/closed-form ratio per ledger channel and per published formula.

    A row is flagged when its ratio falls outside ``[1, envelope]``; the
    envelope defaults to :data:`ENVELOPE` for every row.
    """
    measured = ledger.totals() if isinstance(ledger, CommLedger) else dict(ledger)
    envelopes = envelopes or {}
    rows = []
    meas_all = {**measured, **{g: sum(measured.get(c, 0) for c in ch) for g, ch in GROUPS.items()}}
    exp_all = {**cf, **paper_totals(cf)}
    for name in list(CHANNELS) + list(GROUPS):
        m, e = meas_all.get(name, 0), exp_all.get(name, 0.0)
        if e == 0:
            ratio = 1.0 if m == 0 else math.inf
        else:
            ratio = m / e
        env = envelopes.get(name, ENVELOPE)
        flagged = not (1.0 - 1e-12 <= ratio <= env + 1e-12)
        rows.append(Reconciliation(name, float(m), float(e), ratio, env, flagged))
    return rows
