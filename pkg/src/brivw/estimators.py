"""IVW-family causal effect estimators.

Sums go through :func:`math.fsum`, which is exactly rounded and therefore
independent of summation order.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .kernels import norm_cdf, norm_quantile
from .rao_blackwell import RbRecords

METHODS = ("IVW", "dIVW", "RIVW", "BRIVW")


class EstimationError(RuntimeError):
    pass


class DegenerateInferenceError(EstimationError):
    pass


@dataclass(frozen=True)
class EstimateResult:
    method: str
    beta_hat: float
    var_hat: float
    ci_low: float
    ci_high: float
    p_value: float
    n_selected: int
    kappa_hat: float
    alpha: float = 0.05

    @property
    def se(self) -> float:
        return math.sqrt(self.var_hat)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["se"] = self.se
        return d


def _fsum(x) -> float:
    return math.fsum(np.asarray(x, dtype=float).ravel().tolist())


def _result(method, beta, var, n, kappa, alpha):
    if math.isnan(var):
        nan = float("nan")
        return EstimateResult(method, float(beta), nan, nan, nan, nan, int(n), float(kappa), alpha)
    if not (var >= 0 and math.isfinite(var)):
        raise EstimationError(f"{method}: invalid variance {var}")
    se = math.sqrt(var)
    half = float(norm_quantile(1.0 - alpha / 2.0)) * se
    p = float(2.0 * norm_cdf(-abs(beta) / se)) if se > 0 else (0.0 if beta != 0 else 1.0)
    return EstimateResult(method, float(beta), float(var), beta - half, beta + half, p, int(n),
                          float(kappa), alpha)


def _ratio_estimate(method, cross, square, w, n, kappa, alpha, residual_variance=True):
    """Shared ratio form ``sum(cross*w) / sum(square*w)`` with residual variance.

    ``cross`` and ``square`` are the per-SNP numerator and (bias-corrected)
    denominator terms; ``w`` is ``1/se_Gamma^2``.
    """
    if n == 0:
        raise EstimationError(f"{method}: no instruments")
    den = _fsum(square * w)
    if not den > 0:
        raise EstimationError(
            f"{method}: non-positive denominator {den:.6g} (instruments too weak; kappa_hat={kappa:.4g})")
    beta = _fsum(cross * w) / den
    if not residual_variance:
        return beta, den
    if n < 2:
        # the residual is identically zero; no inference rather than a zero-width CI
        return _result(method, beta, float("nan"), n, kappa, alpha)
    resid = (cross - beta * square) * w
    var = _fsum(resid * resid) / (den * den)
    return _result(method, beta, var, n, kappa, alpha)


def ivw(gamma_hat, Gamma_hat, se_Gamma, se_gamma=None, alpha: float = 0.05) -> EstimateResult:
    """Classical IVW with the fixed-effect variance ``1 / sum(gamma_hat^2 / se_Gamma^2)``."""
    g = np.atleast_1d(np.asarray(gamma_hat, dtype=float))
    G = np.atleast_1d(np.asarray(Gamma_hat, dtype=float))
    w = 1.0 / np.atleast_1d(np.asarray(se_Gamma, dtype=float)) ** 2
    kappa = _kappa(g, se_gamma)
    beta, den = _ratio_estimate("IVW", G * g, g * g, w, len(g), kappa, alpha, residual_variance=False)
    return _result("IVW", beta, 1.0 / den, len(g), kappa, alpha)


def divw(gamma_hat, se_gamma, Gamma_hat, se_Gamma, alpha: float = 0.05) -> EstimateResult:
    g = np.atleast_1d(np.asarray(gamma_hat, dtype=float))
    sg = np.atleast_1d(np.asarray(se_gamma, dtype=float))
    G = np.atleast_1d(np.asarray(Gamma_hat, dtype=float))
    w = 1.0 / np.atleast_1d(np.asarray(se_Gamma, dtype=float)) ** 2
    return _ratio_estimate("dIVW", G * g, g * g - sg * sg, w, len(g), _kappa(g, sg), alpha)


def _kappa(g, sg):
    if sg is None or len(g) == 0:
        return float("nan")
    sg = np.atleast_1d(np.asarray(sg, dtype=float))
    return _fsum((g * g - sg * sg) / (sg * sg)) / len(g)


def _rb_kappa(rec: RbRecords) -> float:
    if len(rec) == 0:
        return float("nan")
    return _fsum((rec.gamma_rb ** 2 - rec.var_gamma_rb) / rec.se_gamma ** 2) / len(rec)


def rivw(rec: RbRecords, alpha: float = 0.05) -> EstimateResult:
    """RIVW on records built with ``rho = 0``: raw outcome effects, no covariance term.

    ``rec.Gamma_rb`` equals the raw outcome estimate when the records were
    built with ``rho = 0``; it is used as-is.
    """
    w = 1.0 / rec.se_Gamma ** 2
    return _ratio_estimate("RIVW", rec.Gamma_rb * rec.gamma_rb,
                           rec.gamma_rb ** 2 - rec.var_gamma_rb, w, len(rec), _rb_kappa(rec), alpha)


def brivw(rec: RbRecords, alpha: float = 0.05) -> EstimateResult:
    w = 1.0 / rec.se_Gamma ** 2
    return _ratio_estimate("BRIVW", rec.Gamma_rb * rec.gamma_rb - rec.cov_rb,
                           rec.gamma_rb ** 2 - rec.var_gamma_rb, w, len(rec), _rb_kappa(rec), alpha)


def brivw_variance(rec: RbRecords, beta_hat: float) -> float:
    """Residual-based variance of the BRIVW estimate at ``beta_hat``."""
    if len(rec) < 2:
        raise DegenerateInferenceError("BRIVW: residual variance needs at least two instruments")
    w = 1.0 / rec.se_Gamma ** 2
    square = rec.gamma_rb ** 2 - rec.var_gamma_rb
    resid = (rec.Gamma_rb * rec.gamma_rb - rec.cov_rb - beta_hat * square) * w
    den = _fsum(square * w)
    return _fsum(resid * resid) / (den * den)


def predicted_bias_ivw(gamma, se_gamma, se_Gamma, rho: float, beta: float) -> float:
    """Leading-order IVW bias under correlated errors, given the true exposure effects."""
    gamma, sg, sG = (np.asarray(v, dtype=float) for v in (gamma, se_gamma, se_Gamma))
    sg, sG = np.broadcast_to(sg, gamma.shape), np.broadcast_to(sG, gamma.shape)
    num = _fsum((rho * sg * sG - beta * sg * sg) / sG ** 2)
    den = _fsum((gamma * gamma + sg * sg) / sG ** 2)
    return num / den


def predicted_bias_divw(gamma, se_gamma, se_Gamma, rho: float) -> float:
    """Leading-order dIVW bias under correlated errors, given the true exposure effects."""
    gamma, sg, sG = (np.asarray(v, dtype=float) for v in (gamma, se_gamma, se_Gamma))
    sg, sG = np.broadcast_to(sg, gamma.shape), np.broadcast_to(sG, gamma.shape)
    return _fsum(rho * sg * sG / sG ** 2) / _fsum(gamma * gamma / sG ** 2)
