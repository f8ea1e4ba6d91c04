"""Scalar and vectorized normal-distribution kernels plus keyed random streams.

All functions accept scalars or numpy arrays and broadcast.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


def norm_pdf(x):
    x = np.asarray(x, dtype=float)
    return np.exp(-0.5 * x * x - _LOG_SQRT_2PI)[()]


def norm_logpdf(x):
    x = np.asarray(x, dtype=float)
    return (-0.5 * x * x - _LOG_SQRT_2PI)[()]


def norm_cdf(x):
    return special.ndtr(np.asarray(x, dtype=float))[()]


def norm_logcdf(x):
    return special.log_ndtr(np.asarray(x, dtype=float))[()]


def norm_sf(x):
    """Upper tail 1 - Phi(x), accurate for large positive x."""
    return special.ndtr(-np.asarray(x, dtype=float))[()]


def norm_quantile(p):
    """Inverse of :func:`norm_cdf`.

    Raises ValueError when any ``p`` lies outside the open interval (0, 1).
    """
    p = np.asarray(p, dtype=float)
    if np.any(~((p > 0.0) & (p < 1.0))):
        raise ValueError("norm_quantile requires 0 < p < 1")
    return special.ndtri(p)[()]


def lambda_from_pvalue(p_threshold: float) -> float:
    """Two-sided z cutoff for a p-value threshold, ``Phi^{-1}(1 - p/2)``.

    Computed as ``-Phi^{-1}(p/2)`` so small thresholds keep full precision.
    """
    if not 0.0 < p_threshold <= 1.0:
        raise ValueError(f"p-value threshold must lie in (0, 1], got {p_threshold}")
    return float(-special.ndtri(p_threshold / 2.0))


def pvalue_from_lambda(lam: float) -> float:
    return float(2.0 * special.ndtr(-lam))


@dataclass(frozen=True)
class RatioInputs:
    """Standardized truncation bounds ``(a_plus, a_minus)`` of the pseudo-noise."""

    a_plus: float
    a_minus: float

    def __post_init__(self):
        if not (np.isfinite(self.a_plus) and np.isfinite(self.a_minus)):
            raise ValueError("ratio bounds must be finite")


def _log_denominator(a_plus, a_minus):
    # log(1 - Phi(a+) + Phi(a-)) = log(Phi(-a+) + Phi(a-)), each tail in log space
    lo = special.log_ndtr(-a_plus)
    hi = special.log_ndtr(a_minus)
    return np.logaddexp(np.minimum(lo, hi), np.maximum(lo, hi))


def _split(a_plus, a_minus):
    a_plus = np.asarray(a_plus, dtype=float)
    a_minus = np.asarray(a_minus, dtype=float)
    a_plus, a_minus = np.broadcast_arrays(a_plus, a_minus)
    log_den = _log_denominator(a_plus, a_minus)
    # phi(a-)/phi(a+) = exp(half_gap), evaluated as a product to avoid cancellation
    half_gap = 0.5 * (a_plus - a_minus) * (a_plus + a_minus)
    plus_is_ref = np.abs(a_plus) <= np.abs(a_minus)
    return a_plus, a_minus, log_den, half_gap, plus_is_ref


def rb_ratio(a_plus, a_minus):
    """``(phi(a+) - phi(a-)) / (1 - Phi(a+) + Phi(a-))`` without cancellation.

    The numerator is factored around the larger of the two densities so the
    difference is formed by ``expm1``; the denominator is a log-sum of two
    log-tails. Stable for ``|a|`` well beyond 40.
    """
    a_plus, a_minus, log_den, half_gap, plus_is_ref = _split(a_plus, a_minus)
    # phi(a+) - phi(a-) = -phi(a+) * expm1(half_gap)       when |a+| <= |a-|
    #                   =  phi(a-) * expm1(-half_gap)      otherwise
    with np.errstate(over="ignore"):
        ref = np.where(plus_is_ref, a_plus, a_minus)
        scale = np.exp(norm_logpdf(ref) - log_den)
        factor = np.where(plus_is_ref, -np.expm1(np.minimum(half_gap, 0.0)),
                          np.expm1(np.minimum(-half_gap, 0.0)))
    return (scale * factor)[()]


def rb_ratio_second(a_plus, a_minus):
    """``(a+ phi(a+) - a- phi(a-)) / (1 - Phi(a+) + Phi(a-))``, same stability as rb_ratio."""
    a_plus, a_minus, log_den, half_gap, plus_is_ref = _split(a_plus, a_minus)
    ref = np.where(plus_is_ref, a_plus, a_minus)
    other = np.where(plus_is_ref, a_minus, a_plus)
    # the non-reference density relative to the reference is exp(-|gap|)
    rel = np.exp(-np.abs(half_gap))
    scale = np.exp(norm_logpdf(ref) - log_den)
    sign = np.where(plus_is_ref, 1.0, -1.0)
    return (sign * scale * (ref - other * rel))[()]


# ---------------------------------------------------------------------------
# Random streams

class KeyedStream:
    """Counter-addressable random stream keyed by a tuple of integers.

    Backed by numpy's Philox counter-based generator seeded through
    ``SeedSequence(key)``. ``uniform`` and ``normal`` consume exactly one
    64-bit word per variate, so the ``j``-th draw of a fresh stream depends
    only on ``(key, j)``.
    """

    def __init__(self, *key: int):
        if not key:
            raise ValueError("a stream needs at least one key component")
        self.key = tuple(int(k) & 0xFFFFFFFFFFFFFFFF for k in key)
        self._gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(self.key)))

    def child(self, *subkey: int) -> "KeyedStream":
        return KeyedStream(*self.key, *subkey)

    def uniform(self, n: int) -> np.ndarray:
        """Draws on the open interval (0, 1)."""
        u = self._gen.random(n)
        u[u == 0.0] = 2.0 ** -54
        return u

    def normal(self, n: int, loc=0.0, scale=1.0) -> np.ndarray:
        return loc + scale * special.ndtri(self.uniform(n))


def bivariate_normal_sample(mean1, mean2, sd1, sd2, rho, stream: KeyedStream):
    """Draw correlated normal pairs via the Cholesky construction.

    ``x2 = mean2 + sd2 * (rho * z1 + sqrt(1 - rho^2) * z2)``. The number of
    draws is the broadcast size of the inputs; a scalar call returns floats.
    """
    if not abs(rho) < 1.0:
        raise ValueError(f"|rho| must be < 1, got {rho}")
    mean1, mean2, sd1, sd2 = np.broadcast_arrays(*(np.asarray(v, dtype=float)
                                                   for v in (mean1, mean2, sd1, sd2)))
    if np.any(sd1 <= 0) or np.any(sd2 <= 0):
        raise ValueError("standard deviations must be positive")
    n = mean1.size
    z1 = stream.normal(n).reshape(mean1.shape)
    z2 = stream.normal(n).reshape(mean1.shape)
    x1 = mean1 + sd1 * z1
    x2 = mean2 + sd2 * (rho * z1 + np.sqrt(1.0 - rho * rho) * z2)
    return x1[()], x2[()]
