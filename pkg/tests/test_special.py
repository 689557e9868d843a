"""Stable scalar kernels against high-precision oracle values.

Oracle values frozen from a 60-digit mpmath evaluation of
ln(Phi(x)), -pdf/cdf, and the quantizer weight (see docstrings).
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mixadc.special import f_prime, g_func, log_phi, neg_log_phi

# mpmath mp.dps=60: log(ncdf(x))
LOG_PHI_ORACLE = {
    -35.0: -616.9751012619225134732,
    -30.0: -454.3212439563431971074,
    -20.0: -203.9171553710972639368,
    -10.0: -53.23128515051247057835,
    -5.0: -15.06499839398872573608,
    -1.0: -1.841021645009263505771,
    0.0: -0.6931471805599453094172,
    1.0: -0.1727537790234498895265,
    5.0: -2.866516129637635933846e-7,
    8.0: -6.220960574271786058534e-16,
}

# mpmath: -npdf(x)/ncdf(x)
F_PRIME_ORACLE = {
    -8.0: -8.121368112236112680654,
    -3.0: -3.283098654930436506928,
    0.0: -0.7978845608028653558799,
    2.0: -0.0552478626789899591023,
    8.0: -5.052271083536895430948e-15,
}

# mpmath: (1/ncdf(x) + 1/ncdf(-x)) exp(-x^2)
G_ORACLE = {
    0.0: 4.0,
    1.0: 2.755986415382346391877,
    5.0: 4.844888083090303301764e-5,
    10.0: 4.882083636292544052843e-21,
}


def test_log_phi_matches_oracle():
    for x, want in LOG_PHI_ORACLE.items():
        got = log_phi(x)
        assert abs(got - want) <= 1e-10 * abs(want), (x, got, want)


def test_log_phi_basics():
    assert log_phi(0.0) == pytest.approx(np.log(0.5), rel=1e-15)
    assert np.isfinite(log_phi(-35.0))
    assert log_phi(50.0) <= 0.0
    # monotone nondecreasing
    xs = np.linspace(-35, 8, 4001)
    vals = log_phi(xs)
    assert np.all(np.diff(vals) >= 0)


def test_log_phi_rejects_nan():
    with pytest.raises(ValueError):
        log_phi(np.nan)


def test_f_prime_matches_oracle():
    for x, want in F_PRIME_ORACLE.items():
        got = f_prime(x)
        assert abs(got - want) <= 1e-8 * abs(want), (x, got, want)


def test_f_prime_shape():
    assert f_prime(0.0) == pytest.approx(-np.sqrt(2 / np.pi), rel=1e-14)
    xs = np.linspace(-35, 8, 2001)
    vals = f_prime(xs)
    assert np.all(vals < 0)
    # left tail approaches the -x asymptote from below
    assert f_prime(-30.0) == pytest.approx(-30.0, rel=2e-3)


def test_g_func_matches_oracle():
    for x, want in G_ORACLE.items():
        got = g_func(x)
        assert abs(got - want) <= 1e-9 * abs(want), (x, got, want)
    assert g_func(10.0) < 1e-20


def test_g_func_bounds_and_symmetry():
    xs = np.linspace(-30, 30, 10001)
    g = g_func(xs)
    assert np.all(g > 0)
    assert np.all(g <= 4.0 + 1e-12)
    assert g_func(0.0) == pytest.approx(4.0, abs=1e-12)
    assert np.allclose(g, g_func(-xs), rtol=1e-12)


def test_second_derivative_of_misfit_in_unit_interval():
    # slope of f' sampled by central differences on a dense grid
    xs = np.linspace(-30, 8, 2000)
    h = 1e-5
    fpp = (f_prime(xs + h) - f_prime(xs - h)) / (2 * h)
    assert np.all(fpp > 0)
    assert np.all(fpp < 1.0)


@settings(max_examples=200, deadline=None)
@given(
    st.floats(-30, 8),
    st.floats(-30, 8),
)
def test_f_prime_lipschitz(x, y):
    assert abs(f_prime(x) - f_prime(y)) <= abs(x - y) + 1e-12


@settings(max_examples=100, deadline=None)
@given(st.floats(-8, 8))
def test_phi_complement(x):
    total = np.exp(log_phi(x)) + np.exp(log_phi(-x))
    assert abs(total - 1.0) <= 1e-12


def test_neg_log_phi_is_minus_log_phi():
    xs = np.linspace(-20, 8, 101)
    assert np.allclose(neg_log_phi(xs), -log_phi(xs), rtol=0, atol=0)
