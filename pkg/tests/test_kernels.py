import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from brivw.kernels import (KeyedStream, bivariate_normal_sample, lambda_from_pvalue, norm_cdf,
                           norm_logcdf, norm_pdf, norm_quantile, norm_sf, pvalue_from_lambda,
                           rb_ratio, rb_ratio_second)

mp.mp.dps = 60


def mp_phi(x):
    return mp.exp(-mp.mpf(x) ** 2 / 2) / mp.sqrt(2 * mp.pi)


def mp_Phi(x):
    return mp.ncdf(mp.mpf(x))


def mp_ratio(ap, am):
    den = mp_Phi(-ap) + mp_Phi(am)
    return float((mp_phi(ap) - mp_phi(am)) / den)


def mp_ratio2(ap, am):
    ap, am = mp.mpf(ap), mp.mpf(am)
    den = mp_Phi(-ap) + mp_Phi(am)
    return float((ap * mp_phi(ap) - am * mp_phi(am)) / den)


def rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


# -- normal kernels ----------------------------------------------------------

@pytest.mark.parametrize("x", [-40.0, -12.5, -3.0, -0.1, 0.0, 0.7, 5.0, 20.0])
def test_cdf_pdf_against_mpmath(x):
    assert rel(float(norm_cdf(x)), float(mp_Phi(x))) < 1e-13
    assert rel(float(norm_pdf(x)), float(mp_phi(x))) < 1e-13
    assert rel(float(norm_sf(x)), float(mp_Phi(-x))) < 1e-13
    assert abs(float(norm_logcdf(x)) - float(mp.log(mp_Phi(x)))) < 1e-12 * max(1.0, x * x)


def test_quantile_inverts_cdf():
    p = np.array([1e-300, 1e-20, 1e-5, 0.3, 0.5, 0.9, 1 - 1e-12])
    assert np.allclose(norm_cdf(norm_quantile(p)), p, rtol=1e-12, atol=0)


@pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5])
def test_quantile_domain(p):
    with pytest.raises(ValueError):
        norm_quantile(p)


def test_lambda_default_threshold():
    # root of 1 - Phi(x) = 2.5e-5 found by mpmath bisection
    target = mp.mpf("2.5e-5")
    root = mp.findroot(lambda x: 1 - mp.ncdf(x) - target, (4, 5), solver="bisect")
    lam = lambda_from_pvalue(5e-5)
    assert abs(lam - float(root)) < 1e-12
    assert abs(lam - 4.0556) < 1e-4
    assert abs(pvalue_from_lambda(lam) - 5e-5) < 1e-18


def test_lambda_genome_wide():
    assert abs(lambda_from_pvalue(5e-8) - 5.4513) < 1e-4


# -- ratio kernels -----------------------------------------------------------

def test_ratio_symmetric_window_is_zero():
    for c in (0.0, 0.5, 3.0, 40.0):
        assert rb_ratio(c, -c) == 0.0


def test_ratio_spec_example_far_right():
    # A- = -10 side; the truncation window (a-, a+) = (-10, 30) covers almost all mass
    assert rel(float(rb_ratio(30.0, -10.0)), mp_ratio(30, -10)) < 1e-12
    assert rel(float(rb_ratio_second(30.0, -10.0)), mp_ratio2(30, -10)) < 1e-12


def test_ratio_literal_positive_window():
    # both bounds positive: the denominator is ~1 and the ratio is ~ -phi(10)
    assert rel(float(rb_ratio(30.0, 10.0)), mp_ratio(30, 10)) < 1e-12
    assert rel(float(rb_ratio_second(30.0, 10.0)), mp_ratio2(30, 10)) < 1e-12


def test_ratio_equal_bounds_is_zero():
    for a in (-3.0, 0.0, 1.7):
        assert rb_ratio(a, a) == 0.0


GRID = [(a, b) for a in (-60, -38, -20, -5, -1, 0, 0.5, 3, 8, 25, 39, 60)
        for b in (-60, -40, -21, -6, -2, -0.3, 0, 1, 4, 9, 30, 45) if a > b]


@pytest.mark.parametrize("ap,am", GRID)
def test_ratio_against_mpmath_grid(ap, am):
    r1 = float(rb_ratio(float(ap), float(am)))
    r2 = float(rb_ratio_second(float(ap), float(am)))
    e1, e2 = mp_ratio(ap, am), mp_ratio2(ap, am)
    assert math.isfinite(r1) and math.isfinite(r2)
    assert abs(r1 - e1) <= 1e-11 * max(abs(e1), 1.0) or rel(r1, e1) < 1e-11
    assert abs(r2 - e2) <= 1e-11 * max(abs(e2), 1.0) or rel(r2, e2) < 1e-11


@settings(max_examples=300, deadline=None)
@given(st.floats(-45, 45), st.floats(0, 40))
def test_ratio_properties(center, half):
    ap, am = center + half, center - half
    r1 = float(rb_ratio(ap, am))
    r1_ref = float(rb_ratio(-am, -ap))
    assert r1 == -r1_ref  # antisymmetric under reflection
    assert float(rb_ratio_second(ap, am)) == pytest.approx(float(rb_ratio_second(-am, -ap)),
                                                           rel=1e-12, abs=1e-300)
    assert math.isfinite(r1)


@settings(max_examples=200, deadline=None)
@given(st.floats(-30, 30), st.floats(0.01, 20))
def test_ratio_matches_mpmath_random(center, half):
    ap, am = center + half, center - half
    e1 = mp_ratio(ap, am)
    r1 = float(rb_ratio(ap, am))
    assert abs(r1 - e1) <= 1e-10 * max(abs(e1), 1.0)


def test_ratio_vectorized():
    ap = np.array([1.0, 3.0, 30.0])
    am = np.array([-1.0, -2.0, -10.0])
    v = rb_ratio(ap, am)
    assert v.shape == (3,)
    assert v[0] == 0.0
    assert v[1] == pytest.approx(mp_ratio(3, -2), rel=1e-13)


# -- random streams ----------------------------------------------------------

def test_stream_is_keyed_and_prefix_stable():
    a = KeyedStream(1, 2, 3).normal(1000)
    b = KeyedStream(1, 2, 3).normal(10)
    c = KeyedStream(1, 2, 4).normal(10)
    assert np.array_equal(a[:10], b)
    assert not np.array_equal(b, c)


def test_stream_uniform_open_interval():
    u = KeyedStream(9).uniform(100_000)
    assert u.min() > 0 and u.max() < 1


def test_bivariate_correlation():
    s = KeyedStream(42, 1)
    x, y = bivariate_normal_sample(np.zeros(10**6), 0.0, 1.0, 1.0, 0.3, s)
    assert abs(np.corrcoef(x, y)[0, 1] - 0.3) < 0.003
    x, y = bivariate_normal_sample(np.zeros(10**6), 0.0, 1.0, 1.0, -0.3, KeyedStream(43))
    assert abs(np.mean(x * y) + 0.3) < 0.005


def test_bivariate_independent_at_zero_rho():
    x, y = bivariate_normal_sample(np.zeros(10**6), 0.0, 2.0, 0.5, 0.0, KeyedStream(5))
    assert abs(np.corrcoef(x, y)[0, 1]) < 0.003
    assert abs(x.std() - 2.0) < 0.01 and abs(y.std() - 0.5) < 0.003


@pytest.mark.parametrize("rho", [1.0, -1.0, 1.2])
def test_bivariate_rejects_bad_rho(rho):
    with pytest.raises(ValueError):
        bivariate_normal_sample(0.0, 0.0, 1.0, 1.0, rho, KeyedStream(1))
