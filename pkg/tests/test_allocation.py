import math

import mpmath
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fbquant.allocation import (BitAllocation, SinPhiTable, allocation_csv, allocation_objective, closed_form,
                                complex_laws, distortion_bound, distortion_csv, exhaustive, kappa_su,
                                scaling_constants, sigma_su)
from fbquant.direction import ExtrapolationFit
from fbquant.distributions import ChiSquare
from fbquant.exceptions import DomainError

mpmath.mp.dps = 40


def _kappa_oracle(M):
    lam = (mpmath.sqrt(mpmath.pi) * mpmath.gamma(mpmath.mpf(M + 1) / 2) / mpmath.gamma(mpmath.mpf(M) / 2)) ** (
        mpmath.mpf(1) / (M - 1))
    return mpmath.mpf(M - 1) / (M + 1) * mpmath.log(32 * lam**2 / (M - 1), 2)


def _sigma_oracle(M):
    inner = mpmath.sqrt(mpmath.pi) * (M - 1) * mpmath.gamma(mpmath.mpf(M + 1) / 2) / (32 * mpmath.gamma(mpmath.mpf(M) / 2))
    return mpmath.mpf(16) * (M + 1) / (M - 1) * inner ** (mpmath.mpf(2) / (M + 1))


@pytest.mark.parametrize("M", [3, 4, 5, 6, 8, 12])
def test_constants_against_oracle(M):
    assert kappa_su(M) == pytest.approx(float(_kappa_oracle(M)), abs=1e-12)
    assert sigma_su(M) == pytest.approx(float(_sigma_oracle(M)), rel=1e-12)
    c = scaling_constants(M)
    assert c.exponent_real == pytest.approx(2 / (M + 1))
    assert c.exponent_complex == pytest.approx(1 / M)


@given(M=st.integers(3, 10), B=st.integers(1, 200))
def test_closed_form_split(M, B):
    a = closed_form(M, B)
    assert a.Bdot + a.Bddot == B
    assert 0 <= a.Bdot <= B
    assert a.Bdot_real + a.Bddot_real == pytest.approx(B)
    assert a.Bdot == min(max(math.floor(a.Bdot_real + 0.5), 0), B)
    # magnitude bits never decrease as the budget grows
    assert closed_form(M, B + 1).Bdot >= a.Bdot


@given(M=st.integers(3, 10), B=st.integers(1, 200))
def test_complex_laws(M, B):
    a, decay = complex_laws(M, B)
    assert a.Bdot_real == pytest.approx(B / M)
    assert a.Bddot_real == pytest.approx((M - 1) * a.Bdot_real)
    assert decay == pytest.approx(2 ** (-B / M))


def test_allocation_validation():
    with pytest.raises(DomainError):
        BitAllocation(3, 3, 7, "closedForm")
    with pytest.raises(DomainError):
        BitAllocation(3, 4, 7, "guess")
    with pytest.raises(DomainError):
        closed_form(5, 0)


def _table(fit_coefficient=1.98):
    return SinPhiTable(5, cache_limit=0, fit=ExtrapolationFit(fit_coefficient, -0.25, (80, 100)))


@given(B=st.integers(6, 20))
@settings(max_examples=30, deadline=None)
def test_exhaustive_beats_closed_form(B):
    model, q = ChiSquare(5), 1e-4
    sp = _table()
    ex = exhaustive(model, q, B, sp)
    cf = closed_form(5, B)
    assert ex.Bdot + ex.Bddot == B
    assert ex.objective <= allocation_objective(model, q, cf.Bdot, sp(2**cf.Bddot)) * (1 + 1e-12)
    # brute force without pruning
    objs = [allocation_objective(model, q, b, sp(2 ** (B - b))) for b in range(B + 1)]
    assert ex.objective == pytest.approx(min(objs), rel=1e-14)
    assert ex.Bdot == objs.index(min(objs))


def test_objective_infeasible_without_direction_gain():
    assert allocation_objective(ChiSquare(5), 1e-4, 3, 1.0) == math.inf


def test_sin_phi_table(quick_cache):
    sp = SinPhiTable(5, quick_cache, cache_limit=16, fit=ExtrapolationFit(2.0, -0.25, (80, 100)))
    assert sp(1) == 1.0
    assert sp(16) == quick_cache.get(5, 16, 0).delta
    assert sp(256) == pytest.approx(0.5)


def test_bound_and_csv():
    assert distortion_bound(5, 30) == pytest.approx(sigma_su(5) * 2.0**-10)
    text = allocation_csv([(10, 1, 9, 4, 6)])
    assert text == "B,Bdot_closed,Bddot_closed,Bdot_exh,Bddot_exh\n10,1,9,4,6\n"
    text = distortion_csv([(10, 0.5, 0.25, 1.0)])
    assert text == "B,distortion_exh,distortion_closed,bound\n10,0.5,0.25,1.0\n"
