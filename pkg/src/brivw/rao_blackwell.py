"""Rao-Blackwellized post-selection association estimates.

For a SNP selected by ``|gamma_hat/se_gamma + Z| > lambda`` the pseudo-noise
``Z/eta`` is, given the data, a standard normal truncated to the outside of
``[A-, A+]`` with ``A± = -gamma_hat/(se_gamma*eta) ± lambda/eta``. Every
quantity below is a moment of that truncated normal.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .kernels import rb_ratio, rb_ratio_second
from .selection import SelectionConfig


def bounds(gamma_hat, se_gamma, cfg: SelectionConfig):
    g = np.asarray(gamma_hat, dtype=float) / (np.asarray(se_gamma, dtype=float) * cfg.eta)
    shift = cfg.lambda_ / cfg.eta
    return -g + shift, -g - shift


def _bracket(r1, r2, eta):
    return 1.0 - r2 / eta ** 2 + r1 * r1 / eta ** 2


def gamma_rb(gamma_hat, se_gamma, cfg: SelectionConfig):
    a_plus, a_minus = bounds(gamma_hat, se_gamma, cfg)
    return (gamma_hat - se_gamma / cfg.eta * rb_ratio(a_plus, a_minus))[()]


def Gamma_rb(gamma_hat, se_gamma, Gamma_hat, se_Gamma, cfg: SelectionConfig, rho: float):
    a_plus, a_minus = bounds(gamma_hat, se_gamma, cfg)
    return (Gamma_hat - rho * se_Gamma / cfg.eta * rb_ratio(a_plus, a_minus))[()]


def var_gamma_rb(gamma_hat, se_gamma, cfg: SelectionConfig):
    """Per-SNP variance estimate of :func:`gamma_rb`; may be negative."""
    a_plus, a_minus = bounds(gamma_hat, se_gamma, cfg)
    b = _bracket(rb_ratio(a_plus, a_minus), rb_ratio_second(a_plus, a_minus), cfg.eta)
    se = np.asarray(se_gamma, dtype=float)
    return (se * (se * b))[()]


def cov_rb(gamma_hat, se_gamma, se_Gamma, cfg: SelectionConfig, rho: float):
    """Per-SNP covariance estimate between ``gamma_hat`` and ``Gamma_rb``; may be negative."""
    a_plus, a_minus = bounds(gamma_hat, se_gamma, cfg)
    b = _bracket(rb_ratio(a_plus, a_minus), rb_ratio_second(a_plus, a_minus), cfg.eta)
    se = np.asarray(se_gamma, dtype=float)
    return ((rho * np.asarray(se_Gamma, dtype=float)) * (se * b))[()]


def Gamma_ini(Gamma_hat, se_Gamma, z, cfg: SelectionConfig, rho: float):
    """Crude outcome estimate independent of the selection statistic (diagnostics only)."""
    return Gamma_hat - rho * se_Gamma / cfg.eta ** 2 * z


@dataclass
class RbRecords:
    """Rao-Blackwellized quantities for the selected SNPs, column-wise."""

    ids: np.ndarray
    a_plus: np.ndarray
    a_minus: np.ndarray
    gamma_rb: np.ndarray
    Gamma_rb: np.ndarray
    var_gamma_rb: np.ndarray
    cov_rb: np.ndarray
    se_gamma: np.ndarray
    se_Gamma: np.ndarray

    def __len__(self):
        return len(self.ids)

    def to_tsv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, delimiter="\t", lineterminator="\n")
            w.writerow(["id", "A_plus", "A_minus", "gamma_rb", "Gamma_rb", "var_gamma_rb", "cov_rb"])
            for row in zip(self.ids, self.a_plus, self.a_minus, self.gamma_rb, self.Gamma_rb,
                           self.var_gamma_rb, self.cov_rb):
                w.writerow([row[0]] + [f"{v:.17g}" for v in row[1:]])


def rao_blackwellize(pairs, selected, cfg: SelectionConfig, rho: float) -> RbRecords:
    """All four corrections for the selected SNPs in one pass.

    ``selected`` is a boolean mask or index array into ``pairs``.
    """
    g = pairs.gamma_hat[selected]
    G = pairs.Gamma_hat[selected]
    sg = pairs.se_gamma[selected]
    sG = pairs.se_Gamma[selected]
    a_plus, a_minus = bounds(g, sg, cfg)
    r1 = rb_ratio(a_plus, a_minus)
    r2 = rb_ratio_second(a_plus, a_minus)
    sgb = sg * _bracket(r1, r2, cfg.eta)
    return RbRecords(
        ids=pairs.ids[selected],
        a_plus=np.atleast_1d(a_plus),
        a_minus=np.atleast_1d(a_minus),
        gamma_rb=np.atleast_1d(g - sg / cfg.eta * r1),
        Gamma_rb=np.atleast_1d(G - rho * sG / cfg.eta * r1),
        var_gamma_rb=np.atleast_1d(sg * sgb),
        cov_rb=np.atleast_1d((rho * sG) * sgb),
        se_gamma=sg,
        se_Gamma=sG,
    )
