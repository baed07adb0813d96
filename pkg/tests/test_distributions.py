import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special, stats

from fbquant.distributions import ChiSquare, constants, gammainc_lower, gammainc_upper, inv_cdf
from fbquant.exceptions import DomainError, UnsupportedModelError

antennas = st.integers(min_value=1, max_value=12)
positive = st.floats(min_value=1e-6, max_value=200.0)


@given(s=st.floats(min_value=0.5, max_value=40.0), x=st.floats(min_value=0.0, max_value=300.0))
def test_incomplete_gamma_matches_scipy(s, x):
    lo, hi = gammainc_lower(s, x), gammainc_upper(s, x)
    assert lo == pytest.approx(special.gammainc(s, x), rel=1e-12, abs=1e-300)
    assert hi == pytest.approx(special.gammaincc(s, x), rel=1e-11, abs=1e-300)


@given(s=st.floats(min_value=0.5, max_value=40.0), x=positive)
def test_incomplete_gamma_complement(s, x):
    assert gammainc_lower(s, x) + gammainc_upper(s, x) == pytest.approx(1.0, abs=1e-14)


def test_incomplete_gamma_edges():
    assert gammainc_lower(2.5, 0.0) == 0.0
    assert gammainc_upper(2.5, 0.0) == 1.0
    assert gammainc_lower(2.5, np.inf) == 1.0
    assert gammainc_upper(2.5, np.inf) == 0.0


@given(M=antennas, y=positive)
def test_pdf_cdf_match_reference(M, y):
    m = ChiSquare(M)
    assert m.pdf(y) == pytest.approx(stats.chi2.pdf(y, M), rel=1e-12, abs=1e-300)
    assert m.cdf(y) == pytest.approx(stats.chi2.cdf(y, M), rel=1e-12, abs=1e-300)
    assert m.sf(y) == pytest.approx(stats.chi2.sf(y, M), rel=1e-11, abs=1e-300)


@given(M=antennas, a=positive, b=positive)
def test_cdf_monotone(M, a, b):
    m = ChiSquare(M)
    lo, hi = sorted((a, b))
    assert m.cdf(lo) <= m.cdf(hi)


@given(M=antennas, y=st.floats(min_value=0.05, max_value=50.0))
def test_dpdf_is_derivative(M, y):
    m = ChiSquare(M)
    h = 1e-6 * y
    fd = (m.pdf(y + h) - m.pdf(y - h)) / (2 * h)
    assert m.dpdf(y) == pytest.approx(fd, rel=1e-5, abs=1e-10)


@given(M=st.integers(3, 10), p=st.floats(min_value=1e-12, max_value=1 - 1e-9))
def test_inverse_cdf_round_trip(M, p):
    m = ChiSquare(M)
    y = m.inv_cdf(p)
    assert y > 0
    target = p if p <= 0.5 else 1 - p
    got = m.cdf(y) if p <= 0.5 else m.sf(y)
    assert got == pytest.approx(target, rel=1e-9)


def test_inverse_cdf_reference_value():
    assert inv_cdf(ChiSquare(5), 1e-4) == pytest.approx(stats.chi2.ppf(1e-4, 5), rel=1e-12)


@pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 1.5, float("nan")])
def test_inverse_cdf_rejects_bad_probability(p):
    with pytest.raises(DomainError):
        ChiSquare(5).inv_cdf(p)


@pytest.mark.parametrize("y", [0.0, -1.0])
def test_nonpositive_argument_rejected(y):
    with pytest.raises(DomainError):
        ChiSquare(5).pdf(y)
    with pytest.raises(DomainError):
        ChiSquare(5).cdf(y)


def test_bad_antenna_count():
    with pytest.raises(UnsupportedModelError):
        ChiSquare(0)
    for M in (1, 2):
        with pytest.raises(UnsupportedModelError):
            ChiSquare(M).constants()


@pytest.mark.parametrize("M", [3, 4, 5, 8])
def test_constants(M):
    c = constants(ChiSquare(M))
    assert c.eta == 2.0
    assert c.mean_y == M
    assert c.rho_csi == pytest.approx(1.0 / (M - 2), rel=1e-15)
    assert c.omega == pytest.approx(M * (M - 2) / 4.0, rel=1e-15)
    # E[1/Y] by quadrature
    quad = special.gamma((M - 2) / 2) / (2 * special.gamma(M / 2))
    assert c.rho_csi == pytest.approx(quad, rel=1e-12)


@given(M=st.integers(3, 9), a=st.floats(min_value=1e-4, max_value=30.0))
@settings(max_examples=30)
def test_inverse_moment_above(M, a):
    from scipy.integrate import quad
    m = ChiSquare(M)
    ref, _ = quad(lambda y: stats.chi2.pdf(y, M) / y, a, np.inf, epsabs=0, epsrel=1e-11, limit=200)
    assert m.inverse_moment_above(a) == pytest.approx(ref, rel=1e-8)


@pytest.mark.parametrize("M", [3, 4, 5, 7])
def test_fprime_max(M):
    m = ChiSquare(M)
    for lower in (1e-3, 0.5, 2.0, 10.0):
        grid = np.linspace(lower, lower + 80, 400001)
        assert m.fprime_max(lower) == pytest.approx(np.abs(m.dpdf(grid)).max(), rel=1e-6)


def test_frozen_and_hashable():
    m = ChiSquare(4)
    assert hash(m) == hash(ChiSquare(4))
    with pytest.raises(Exception):
        m.M = 3
    assert math.isfinite(m.pdf(1.0))
