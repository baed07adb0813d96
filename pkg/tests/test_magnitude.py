import json
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats
from scipy.integrate import quad

from fbquant.distributions import ChiSquare
from fbquant.exceptions import DomainError, OutageTargetError
from fbquant.magnitude import (MagnitudeCodebook, average_power, build_footnote, build_uniform_db,
                               comparison_csv, diagnostics, gradient, optimize_numeric, single_level,
                               solve_Lc, power_bound, zeta)

models = st.sampled_from([ChiSquare(3), ChiSquare(4), ChiSquare(5), ChiSquare(8)])
outages = st.sampled_from([1e-5, 1e-4, 1e-3, 1e-2])
sizes = st.integers(min_value=2, max_value=4096)


@given(c=st.floats(min_value=1e-3, max_value=1e4), n=st.integers(2, 1 << 16))
def test_Lc_is_root(c, n):
    L = solve_Lc(c, n)
    assert L > 0
    assert math.log(L) + (n - 1) * math.log1p(L) == pytest.approx(math.log(c), abs=1e-11)


@given(c=st.floats(min_value=1e-2, max_value=1e3), n=st.integers(2, 1 << 14))
def test_Lc_decreasing_in_n(c, n):
    assert solve_Lc(c, n + 1) < solve_Lc(c, n)
    assert zeta(c, n) == pytest.approx(-math.log(solve_Lc(c, n)) / math.log(n))


def test_Lc_bad_input():
    with pytest.raises(DomainError):
        solve_Lc(0.0, 4)
    with pytest.raises(DomainError):
        solve_Lc(1.0, 1)


@given(model=models, q=outages, N=sizes)
@settings(max_examples=60, deadline=None)
def test_uniform_db_structure(model, q, N):
    cb = build_uniform_db(model, q, N)
    y = cb.levels
    assert y.size == N
    assert y[0] == pytest.approx(model.inv_cdf(q), rel=1e-14)
    assert model.cdf(y[0]) == pytest.approx(q, rel=1e-9)
    ratios = y[1:] / y[:-1]
    np.testing.assert_allclose(ratios, cb.r, rtol=1e-10)
    # last level sits at eta / (r - 1)
    assert y[-1] == pytest.approx(model.constants().eta / (cb.r - 1.0), rel=1e-9)
    np.testing.assert_allclose(np.diff(cb.levels_db()), 10 * math.log10(cb.r), rtol=1e-8)


@given(model=models, q=outages, N=st.integers(2, 2048))
@settings(max_examples=60, deadline=None)
def test_power_between_floor_and_bound(model, q, N):
    cb = build_uniform_db(model, q, N)
    P = average_power(model, cb, q)
    # perfect magnitude knowledge above the outage threshold is the floor
    floor = model.inverse_moment_above(cb.levels[0])
    assert floor < P < power_bound(model, cb)


@given(model=models, q=outages, N=st.integers(2, 1024))
@settings(max_examples=40, deadline=None)
def test_power_decreases_with_levels(model, q, N):
    P = [average_power(model, build_uniform_db(model, q, n), q) for n in (N, 2 * N)]
    assert P[1] < P[0]


def test_average_power_by_quadrature():
    model, q = ChiSquare(4), 1e-4
    cb = build_uniform_db(model, q, 8)
    y = np.append(cb.levels, np.inf)
    ref = sum(quad(lambda t: stats.chi2.pdf(t, 4), y[i], y[i + 1], epsrel=1e-12)[0] / y[i] for i in range(8))
    assert average_power(model, cb, q) == pytest.approx(ref, rel=1e-9)


def test_single_level_power():
    model, q = ChiSquare(5), 1e-3
    cb = single_level(model, q)
    assert average_power(model, cb, q) == pytest.approx((1 - q) / cb.levels[0], rel=1e-12)


def test_outage_mismatch_rejected():
    model = ChiSquare(5)
    cb = build_uniform_db(model, 1e-4, 8)
    with pytest.raises(OutageTargetError):
        average_power(model, cb, 1e-3)


def test_gradient_matches_finite_differences():
    model, q = ChiSquare(4), 1e-4
    cb = build_uniform_db(model, q, 12)
    g = gradient(model, cb, q)
    y = cb.levels
    for k in range(1, 12):
        h = 1e-6 * y[k]
        up, dn = y.copy(), y.copy()
        up[k] += h
        dn[k] -= h
        fd = (average_power(model, up, q) - average_power(model, dn, q)) / (2 * h)
        assert g[k - 1] == pytest.approx(fd, rel=1e-5, abs=1e-12)


@pytest.mark.parametrize("M,q,N", [(3, 1e-5, 32), (4, 1e-4, 24), (5, 1e-4, 16)])
def test_numeric_codebook_is_stationary_and_better(M, q, N):
    model = ChiSquare(M)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        num = optimize_numeric(model, q, N, restarts=3, seed=1)
    uni = build_uniform_db(model, q, N)
    assert num.converged
    assert np.linalg.norm(gradient(model, num, q)) < 1e-7
    assert average_power(model, num, q) <= average_power(model, uni, q)
    assert num.levels[0] == uni.levels[0]


def test_numeric_is_deterministic():
    model = ChiSquare(4)
    a = optimize_numeric(model, 1e-4, 10, restarts=4, seed=7)
    b = optimize_numeric(model, 1e-4, 10, restarts=4, seed=7)
    assert np.array_equal(a.levels, b.levels)


@pytest.mark.parametrize("N", [16, 64, 256, 1024])
def test_gradient_norm_within_its_bound(N):
    d = diagnostics(ChiSquare(4), 1e-4, N)
    assert d.gradient_norm <= d.gradient_bound
    assert d.power_bound_ratio > 1.0


def test_footnote_codebook_is_geometric():
    model = ChiSquare(5)
    cb = build_footnote(model, 1e-4, 64)
    np.testing.assert_allclose(cb.levels[1:] / cb.levels[:-1], cb.r, rtol=1e-12)
    assert cb.r - 1 == pytest.approx(64 ** (-1 + 1 / math.sqrt(6)))


@given(N=st.integers(2, 64), y=st.floats(min_value=1e-4, max_value=1e3))
@settings(deadline=None)
def test_quantize_finds_containing_interval(N, y):
    cb = build_uniform_db(ChiSquare(5), 1e-4, N)
    i = int(cb.quantize(y))
    if i < 0:
        assert y < cb.levels[0]
    else:
        assert cb.levels[i] <= y
        assert i == N - 1 or y < cb.levels[i + 1]


def test_codebook_validation():
    with pytest.raises(DomainError):
        MagnitudeCodebook(np.array([1.0, 1.0]))
    with pytest.raises(DomainError):
        MagnitudeCodebook(np.array([-1.0, 1.0]))
    with pytest.raises(DomainError):
        MagnitudeCodebook(np.array([1.0]), kind="other")
    with pytest.raises(DomainError):
        build_uniform_db(ChiSquare(5), 0.0, 8)
    with pytest.raises(DomainError):
        build_uniform_db(ChiSquare(5), 1e-4, 1)
    cb = build_uniform_db(ChiSquare(5), 1e-4, 4)
    with pytest.raises(ValueError):
        cb.levels[0] = 1.0


def test_serialization_round_trip():
    model = ChiSquare(5)
    cb = build_uniform_db(model, 1e-4, 16)
    text = cb.to_json(model, 1e-4)
    back = MagnitudeCodebook.from_json(text)
    assert np.array_equal(back.levels, cb.levels)
    assert back.r == cb.r and back.kind == "uniform-dB"
    assert json.loads(text)["model"] == {"M": 5}
    rows = cb.to_csv().splitlines()
    assert rows[0] == "n,y_n,y_n_dB" and len(rows) == 17
    assert float(rows[1].split(",")[1]) == cb.levels[0]


def test_comparison_csv():
    model = ChiSquare(4)
    u = build_uniform_db(model, 1e-4, 6)
    text = comparison_csv(u, u)
    assert text.startswith("n,y_uniform_dB,y_numeric_dB\n")
    assert "\r" not in text and text.count("\n") == 7
