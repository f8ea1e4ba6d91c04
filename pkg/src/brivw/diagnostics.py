"""Closed-form post-selection law of the standardized outcome association.

Everything is on the ``Gamma_hat / se_Gamma`` scale; multiply by ``se_Gamma``
to return to effect units.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .kernels import norm_cdf, norm_pdf

MIN_SELECTION_PROB = 1e-300


class ConditioningError(ValueError):
    pass


@dataclass(frozen=True)
class Lemma1Params:
    gamma_over_sigma: float
    Gamma_over_sigma: float
    rho: float
    lambda_: float
    eta: float

    def __post_init__(self):
        if not abs(self.rho) < 1:
            raise ValueError(f"|rho| must be < 1, got {self.rho}")
        if not self.lambda_ >= 0:
            raise ValueError("lambda must be >= 0")
        if not self.eta > 0:
            raise ValueError("eta must be > 0")


def selection_probability(p: Lemma1Params) -> float:
    s = math.sqrt(1.0 + p.eta ** 2)
    g = p.gamma_over_sigma
    prob = float(norm_cdf((-p.lambda_ - g) / s) + norm_cdf((g - p.lambda_) / s))
    if prob < MIN_SELECTION_PROB:
        raise ConditioningError(f"selection probability {prob:.3g} too small to condition on")
    return prob


def conditional_density(x, p: Lemma1Params):
    """Density of ``Gamma_hat/se_Gamma`` given selection, at ``x``."""
    prob = selection_probability(p)
    x = np.asarray(x, dtype=float)
    s = math.sqrt(1.0 - p.rho ** 2 + p.eta ** 2)
    shift = -p.gamma_over_sigma + p.rho * p.Gamma_over_sigma - p.rho * x
    # Phi((-lambda + shift)/s) + 1 - Phi((lambda + shift)/s)
    bracket = norm_cdf((-p.lambda_ + shift) / s) + norm_cdf((-p.lambda_ - shift) / s)
    return (norm_pdf(x - p.Gamma_over_sigma) * bracket / prob)[()]


def conditional_bias(p: Lemma1Params) -> float:
    """Selection-induced shift of the standardized outcome association."""
    prob = selection_probability(p)
    s = math.sqrt(1.0 + p.eta ** 2)
    g = p.gamma_over_sigma
    diff = float(norm_pdf((p.lambda_ - g) / s) - norm_pdf((-p.lambda_ - g) / s))
    return p.rho / (prob * s) * diff


def conditional_mean(p: Lemma1Params) -> float:
    return p.Gamma_over_sigma + conditional_bias(p)


def integration_window(p: Lemma1Params, half_width: float = 12.0):
    c = p.Gamma_over_sigma
    return c - half_width, c + half_width


def quad_moment(p: Lemma1Params, order: int = 0) -> float:
    """``∫ x^order f(x) dx`` over the centred 24-unit window by adaptive Gauss-Kronrod."""
    lo, hi = integration_window(p)
    val, _ = integrate.quad(lambda x: x ** order * conditional_density(x, p), lo, hi,
                            epsabs=1e-12, epsrel=1e-10, limit=200,
                            points=[p.Gamma_over_sigma])
    return val


def conditional_cdf(x, p: Lemma1Params, step: float = 1e-3):
    """CDF of the post-selection law, integrated numerically on a fine grid.

    The density is integrated with cumulative Simpson on a grid of spacing
    ``step`` across the centred window and linearly interpolated; outside the
    window the CDF is 0 or 1 to within the Gaussian tail mass beyond 12 units.
    """
    lo, hi = integration_window(p)
    n = int(math.ceil((hi - lo) / step)) + 1
    grid = np.linspace(lo, hi, n)
    f = conditional_density(grid, p)
    cdf = np.concatenate([[0.0], integrate.cumulative_simpson(f, x=grid)])
    return np.interp(np.asarray(x, dtype=float), grid, cdf, left=0.0, right=1.0)[()]


def density_grid(p: Lemma1Params, n: int = 481):
    lo, hi = integration_window(p)
    x = np.linspace(lo, hi, n)
    return x, conditional_density(x, p)


def bias_curve(strengths, rho: float, lambda_: float, eta: float, outcome_equals_exposure=True):
    """Selection bias of the standardized outcome association across instrument strengths."""
    out = []
    for g in np.asarray(strengths, dtype=float):
        G = g if outcome_equals_exposure else 0.0
        out.append(conditional_bias(Lemma1Params(g, G, rho, lambda_, eta)))
    return np.array(out)


def write_density_csv(path_or_fh, params_list):
    """Long-format CSV ``rho,gamma_over_sigma,Gamma_over_sigma,x,density``."""
    own = isinstance(path_or_fh, (str, bytes)) or hasattr(path_or_fh, "__fspath__")
    fh = open(path_or_fh, "w", newline="") if own else path_or_fh
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rho", "gamma_over_sigma", "Gamma_over_sigma", "x", "density"])
        for p in params_list:
            x, f = density_grid(p)
            for xi, fi in zip(x, f):
                w.writerow([f"{p.rho:.17g}", f"{p.gamma_over_sigma:.17g}",
                            f"{p.Gamma_over_sigma:.17g}", f"{xi:.17g}", f"{fi:.17g}"])
    finally:
        if own:
            fh.close()
