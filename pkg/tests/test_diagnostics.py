import itertools
import math

import numpy as np
import pytest

from brivw import diagnostics as diag
from brivw.kernels import lambda_from_pvalue, norm_pdf

LAM = lambda_from_pvalue(5e-5)
GRID = [diag.Lemma1Params(g * LAM, G, rho, LAM, eta)
        for g, G, rho, eta in itertools.product((0.0, 0.1, 0.5, 1.0, 2.0), (0.0, 1.5),
                                                (-0.6, -0.3, 0.0, 0.3), (0.3, 0.5, 1.0))]


def test_rho_zero_density_is_standard_normal():
    p = diag.Lemma1Params(0.5 * LAM, 1.2, 0.0, LAM, 0.5)
    x = np.linspace(-5, 7, 101)
    assert np.allclose(diag.conditional_density(x, p), norm_pdf(x - 1.2), rtol=1e-13, atol=0)


@pytest.mark.parametrize("p", GRID)
def test_normalization(p):
    assert abs(diag.quad_moment(p, 0) - 1.0) < 1e-8


@pytest.mark.parametrize("p", GRID)
def test_mean_matches_quadrature(p):
    assert abs(diag.quad_moment(p, 1) - diag.conditional_mean(p)) < 1e-6


def test_mean_special_cases():
    assert diag.conditional_mean(diag.Lemma1Params(1.0, 2.0, 0.0, LAM, 0.5)) == 2.0
    assert diag.conditional_mean(diag.Lemma1Params(0.0, 2.0, 0.7, LAM, 0.5)) == 2.0


def test_bias_odd_in_rho():
    for g in (0.1, 0.5, 1.3):
        a = diag.conditional_bias(diag.Lemma1Params(g * LAM, 0.0, 0.4, LAM, 0.5))
        b = diag.conditional_bias(diag.Lemma1Params(g * LAM, 0.0, -0.4, LAM, 0.5))
        assert a == -b and a > 0


def test_bias_shape_in_strength():
    # zero at g = 0, a single peak below 0.2 lambda, then strictly decreasing to 2 lambda
    g = np.linspace(0.0, 2 * LAM, 4001)
    b = diag.bias_curve(g, 0.3, LAM, 0.5)
    assert b[0] == 0.0
    k = int(np.argmax(b))
    assert 0 < g[k] < 0.2 * LAM
    assert np.all(np.diff(b[: k + 1]) > 0)
    assert np.all(np.diff(b[k:]) < 0)
    weak, moderate, strong = diag.bias_curve(np.array([0.1, 0.5, 2.0]) * LAM, 0.3, LAM, 0.5)
    assert weak > moderate > strong > 0


def test_conditioning_error():
    with pytest.raises(diag.ConditioningError):
        diag.conditional_density(0.0, diag.Lemma1Params(0.0, 0.0, 0.3, 60.0, 0.5))


@pytest.mark.parametrize("kw", [dict(rho=1.0), dict(lambda_=-1.0), dict(eta=0.0)])
def test_invalid_params(kw):
    base = dict(gamma_over_sigma=0.0, Gamma_over_sigma=0.0, rho=0.0, lambda_=1.0, eta=0.5)
    base.update(kw)
    with pytest.raises(ValueError):
        diag.Lemma1Params(**base)


def test_cdf_endpoints_and_monotone():
    p = diag.Lemma1Params(0.1 * LAM, 0.1 * LAM, 0.3, LAM, 0.5)
    x = np.linspace(-20, 20, 2001)
    c = diag.conditional_cdf(x, p)
    assert c[0] == 0.0 and abs(c[-1] - 1.0) < 1e-9
    assert np.all(np.diff(c) >= 0)


def test_density_csv(tmp_path):
    ps = [diag.Lemma1Params(1.0, 1.0, r, LAM, 0.5) for r in (-0.3, 0.3)]
    diag.write_density_csv(tmp_path / "d.csv", ps)
    lines = (tmp_path / "d.csv").read_text().splitlines()
    assert lines[0] == "rho,gamma_over_sigma,Gamma_over_sigma,x,density"
    assert len(lines) == 1 + 2 * 481
