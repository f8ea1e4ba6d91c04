import math

import numpy as np
import pytest

from brivw.kernels import lambda_from_pvalue
from brivw.rao_blackwell import (Gamma_ini, Gamma_rb, bounds, cov_rb, gamma_rb,
                                 rao_blackwellize, var_gamma_rb)
from brivw.selection import SelectionConfig, select
from brivw.structure import SnpPairs, StructureParams, adjust
from oracles import sample_selected

LAM = lambda_from_pvalue(5e-5)


def within(values, target, k=3.0):
    v = np.asarray(values)
    se = v.std(ddof=1) / math.sqrt(len(v))
    return abs(v.mean() - target) < k * se, v.mean(), se


def test_bounds_width():
    cfg = SelectionConfig(LAM, 0.5)
    ap, am = bounds(np.array([0.3, -2.0]), np.array([0.1, 0.5]), cfg)
    assert np.allclose(ap - am, 2 * LAM / 0.5, rtol=1e-15)


def test_symmetric_input_no_correction():
    cfg = SelectionConfig(LAM, 0.5)
    assert gamma_rb(0.0, 0.01, cfg) == 0.0
    assert Gamma_rb(0.0, 0.01, 0.7, 0.02, cfg, 0.4) == 0.7


def test_large_eta_limit():
    cfg = SelectionConfig(LAM, 1e6)
    assert gamma_rb(0.03, 0.01, cfg) == pytest.approx(0.03, abs=1e-9)
    assert var_gamma_rb(0.03, 0.01, cfg) == pytest.approx(1e-4, rel=1e-6)


def test_zero_threshold_zero_effect():
    cfg = SelectionConfig(0.0, 0.5)
    assert var_gamma_rb(0.0, 0.01, cfg) == pytest.approx(1e-4, rel=1e-15)


def test_rho_zero_collapse():
    cfg = SelectionConfig(LAM, 0.5)
    g = np.linspace(-0.1, 0.1, 101)
    assert np.array_equal(Gamma_rb(g, 0.01, np.ones(101), 0.02, cfg, 0.0), np.ones(101))
    assert np.all(cov_rb(g, 0.01, 0.02, cfg, 0.0) == 0.0)


def test_bracket_identity_vectorized():
    rng = np.random.default_rng(3)
    n = 10_000
    g, sg, sG = rng.normal(0, 0.05, n), rng.uniform(1e-3, 0.1, n), rng.uniform(1e-3, 0.1, n)
    cfg = SelectionConfig(LAM, 0.5)
    rho = -0.27
    lhs = cov_rb(g, sg, sG, cfg, rho) * sg
    rhs = rho * sG * var_gamma_rb(g, sg, cfg)
    assert np.all(np.abs(lhs - rhs) <= 4 * np.spacing(np.abs(rhs)))


def test_records_match_scalar_functions():
    rng = np.random.default_rng(1)
    n = 500
    pairs = adjust(SnpPairs(ids=np.arange(n).astype(str), gamma_hat=rng.normal(0, 0.02, n),
                            se_gamma_raw=np.full(n, 0.003), Gamma_hat=rng.normal(0, 0.02, n),
                            se_Gamma_raw=np.full(n, 0.004)), StructureParams(1.1, 1.2, 0.3))
    cfg = SelectionConfig(2.0, 0.5, 4)
    sel = select(pairs, cfg)
    rho = StructureParams(1.1, 1.2, 0.3).rho
    rec = rao_blackwellize(pairs, sel.selected, cfg, rho)
    i = sel.indices
    assert np.array_equal(rec.gamma_rb, gamma_rb(pairs.gamma_hat[i], pairs.se_gamma[i], cfg))
    assert np.array_equal(rec.Gamma_rb, Gamma_rb(pairs.gamma_hat[i], pairs.se_gamma[i],
                                                 pairs.Gamma_hat[i], pairs.se_Gamma[i], cfg, rho))
    assert np.array_equal(rec.var_gamma_rb, var_gamma_rb(pairs.gamma_hat[i], pairs.se_gamma[i], cfg))
    assert np.array_equal(rec.cov_rb, cov_rb(pairs.gamma_hat[i], pairs.se_gamma[i],
                                             pairs.se_Gamma[i], cfg, rho))


def test_audit_tsv(tmp_path):
    pairs = adjust(SnpPairs(ids=["a", "b"], gamma_hat=[0.05, -0.04], se_gamma_raw=[0.01, 0.01],
                            Gamma_hat=[0.01, 0.0], se_Gamma_raw=[0.01, 0.01]), StructureParams())
    rec = rao_blackwellize(pairs, np.array([True, True]), SelectionConfig(LAM, 0.5), 0.2)
    rec.to_tsv(tmp_path / "a.tsv")
    lines = (tmp_path / "a.tsv").read_text().splitlines()
    assert lines[0].split("\t") == ["id", "A_plus", "A_minus", "gamma_rb", "Gamma_rb",
                                    "var_gamma_rb", "cov_rb"]
    assert float(lines[1].split("\t")[3]) == rec.gamma_rb[0]


# -- Monte Carlo oracles ------------------------------------------------------

N = 10**6


def draws(g, G, rho, lam, eta, seed):
    x, y, z = sample_selected(g, G, rho, lam, eta, N, np.random.default_rng(seed))
    cfg = SelectionConfig(lam, eta)
    return x, y, z, cfg


def test_gamma_rb_unbiased():
    x, y, z, cfg = draws(2.0, 0.0, 0.0, 1.96, 0.5, 10)
    ok, m, se = within(gamma_rb(x, 1.0, cfg), 2.0)
    assert ok, (m, se)
    assert abs(x.mean() - 2.0) > 10 * se  # the raw estimate is visibly shifted


def test_Gamma_rb_unbiased_moderate_instrument():
    g = 0.5 * LAM
    x, y, z, cfg = draws(g, g, 0.3, LAM, 0.5, 11)
    ok, m, se = within(Gamma_rb(x, 1.0, y, 1.0, cfg, 0.3), g)
    assert ok, (m, se)
    assert abs(y.mean() - g) > 10 * se


def test_var_gamma_rb_unbiased():
    x, y, z, cfg = draws(2.0, 0.0, 0.0, 1.96, 0.5, 12)
    grb = gamma_rb(x, 1.0, cfg)
    d = var_gamma_rb(x, 1.0, cfg) - (grb - 2.0) ** 2
    ok, m, se = within(d, 0.0)
    assert ok, (m, se)


def test_cov_rb_unbiased():
    x, y, z, cfg = draws(2.0, 1.0, 0.3, 1.96, 0.5, 13)
    grb = gamma_rb(x, 1.0, cfg)
    Grb = Gamma_rb(x, 1.0, y, 1.0, cfg, 0.3)
    d = cov_rb(x, 1.0, 1.0, cfg, 0.3) - (grb - 2.0) * (Grb - 1.0)
    ok, m, se = within(d, 0.0)
    assert ok, (m, se)


def test_Gamma_ini_independent_of_selection():
    rng = np.random.default_rng(14)
    n = N
    cfg = SelectionConfig(1.96, 0.5)
    x = 1.0 + rng.standard_normal(n)
    y = 0.5 + 0.3 * (x - 1.0) + math.sqrt(1 - 0.09) * rng.standard_normal(n)
    z = 0.5 * rng.standard_normal(n)
    ini = Gamma_ini(y, 1.0, z, cfg, 0.3)
    w = x + z
    assert abs(np.corrcoef(ini, w)[0, 1]) < 0.005
    sel = np.abs(w) > cfg.lambda_
    ok, m, se = within(ini[sel], 0.5)
    assert ok, (m, se)


def test_aggregate_covariance_relative_error_shrinks():
    g, rho = 2.0, 0.3
    x, y, z, cfg = draws(g, 1.0, rho, 1.96, 0.5, 15)
    grb = gamma_rb(x, 1.0, cfg)
    Grb = Gamma_rb(x, 1.0, y, 1.0, cfg, rho)
    truth = float(np.mean((grb - g) * (Grb - 1.0)))
    est = cov_rb(x, 1.0, 1.0, cfg, rho)
    errs = []
    for p in (100, 1000, 10_000):
        blocks = est[: (N // p) * p].reshape(-1, p)[:50]
        errs.append(np.mean(np.abs(blocks.sum(axis=1) - p * truth) / (p * truth)))
    assert errs[0] > errs[1] > errs[2]
