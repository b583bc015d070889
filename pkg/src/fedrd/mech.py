"""Privacy mechanisms: clipping, Gaussian perturbation, and the Poisson
binomial quantizer with its sum estimator."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import CorruptedAggregateError, ParameterError, RangeError


@dataclass(frozen=True)
class PbmParams:
    """Quantizer settings.

    Attributes:
        bins: number of Bernoulli trials per value (``b``).
        beta: slope of the success probability, in ``[0, 1/4]``.
        bound: inputs must lie in ``[-bound, bound]``.
        parties: number of quantized values summed before estimation.
    """

    bins: int
    beta: float
    bound: float = 1.0
    parties: int = 3

    def __post_init__(self):
        if int(self.bins) != self.bins or self.bins < 1:
            raise ParameterError(f"bins must be a positive integer, got {self.bins}")
        if not 0.0 <= self.beta <= 0.25:
            raise ParameterError(f"beta must lie in [0, 1/4], got {self.beta}")
        if not self.bound > 0:
            raise ParameterError(f"bound must be positive, got {self.bound}")
        if int(self.parties) != self.parties or self.parties < 1:
            raise ParameterError(f"parties must be a positive integer, got {self.parties}")

    def sum_variance(self) -> float:
        """Variance of the estimated sum of ``parties`` values."""
        return self.bound**2 * self.parties / (4.0 * self.beta**2 * self.bins)


def clip(v, k: float) -> np.ndarray:
    if not k > 0:
        raise ParameterError("clip bound must be positive")
    return np.clip(np.asarray(v, dtype=float), -k, k)


def gaussian_perturb(e, sigma2: float, rng: np.random.Generator) -> np.ndarray:
    if not sigma2 > 0:
        raise ParameterError(f"noise variance must be positive, got {sigma2}")
    e = np.asarray(e, dtype=float)
    return e + rng.normal(0.0, np.sqrt(sigma2), size=e.shape)


def pbm_quantize(x, p: PbmParams, rng: np.random.Generator):
    """Draw ``Binomial(bins, 1/2 + beta * x / bound)`` for each entry of ``x``.

    Out-of-range input is an error: clipping is the caller's job.
    """
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(x) > p.bound) or not np.isfinite(x).all():
        raise RangeError(f"quantizer input outside [-{p.bound}, {p.bound}]")
    prob = 0.5 + (p.beta / p.bound) * x
    q = rng.binomial(p.bins, prob)
    return int(q) if q.ndim == 0 else q.astype(np.int64)


def pbm_sum_estimate(q_sum, p: PbmParams) -> np.ndarray:
    """Unbiased estimate of the sum of ``p.parties`` clipped values."""
    q = np.asarray(q_sum)
    if np.any(q < 0) or np.any(q > p.parties * p.bins):
        raise CorruptedAggregateError(
            f"aggregate entry outside [0, {p.parties * p.bins}]"
        )
    if p.beta == 0:
        raise ParameterError("beta = 0 carries no signal; the sum cannot be estimated")
    return (p.bound / (p.beta * p.bins)) * (q - p.bins * p.parties / 2.0)
