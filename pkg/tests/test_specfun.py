from __future__ import annotations

import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sln_raresim.exceptions import DomainError, EmptyRegion
from sln_raresim.specfun import (log_phi, log_phi_bar, mills_ratio, normal_quantile, normal_quantile_from_log,
                                 phi_bar, trunc_norm_inverse)

mp.mp.dps = 60


def _oracle_log_phi_bar(x: float) -> float:
    x = mp.mpf(x)
    if x < 0:
        # ln(1 - Phi(x)) loses every digit of the tiny Phi(x) unless taken as log1p
        return float(mp.log1p(-mp.ncdf(x)))
    return float(mp.log(mp.erfc(x / mp.sqrt(2)) / 2))


def _oracle_log_phi(x: float) -> float:
    return _oracle_log_phi_bar(-x)


def test_log_phi_bar_zero():
    assert log_phi_bar(0.0) == pytest.approx(math.log(0.5), rel=1e-15)


def test_log_phi_bar_far_left_is_zero():
    assert abs(log_phi_bar(-40.0)) < 1e-300


def test_table3_entry():
    # 10 identical tails at ln(15)/0.25
    x = math.log(15) / 0.25
    assert 10 * math.exp(log_phi_bar(x)) == pytest.approx(1.2113e-26, rel=5e-5)


@pytest.mark.parametrize("x", np.linspace(-40, 40, 161))
def test_log_phi_bar_matches_high_precision(x):
    ref = _oracle_log_phi_bar(x)
    got = float(log_phi_bar(x))
    if ref == 0.0:
        assert abs(got) < 1e-300
    else:
        assert got == pytest.approx(ref, rel=1e-12, abs=1e-300)


@pytest.mark.parametrize("x", [50.0, 100.0, 1e3, 1e5])
def test_log_phi_bar_far_right_asymptotic(x):
    ref = _oracle_log_phi_bar(x)
    assert float(log_phi_bar(x)) == pytest.approx(ref, rel=1e-10)


@given(st.floats(-60, 60))
@settings(max_examples=200)
def test_symmetry(x):
    assert float(log_phi_bar(x)) == float(log_phi(-x))


def test_monotone_decreasing():
    x = np.linspace(-38, 1e3, 20001)
    assert np.all(np.diff(log_phi_bar(x)) < 0)


@pytest.mark.parametrize("q", [0.5, 0.1, 1e-5, 1e-20, 1e-100, 1e-200, 1e-250])
def test_round_trip(q):
    x = normal_quantile_from_log(math.log(q))
    # Phibar(-x) = Phi(x) = q
    assert float(phi_bar(-x)) == pytest.approx(q, rel=1e-12)
    if q >= 1e-15:
        assert float(phi_bar(normal_quantile(1 - q))) == pytest.approx(q, rel=1e-12 / q * 1e-4 + 1e-12)


def test_quantile_examples():
    assert normal_quantile(0.5) == 0.0
    assert float(normal_quantile(float(1 - phi_bar(1.0)))) == pytest.approx(1.0, abs=1e-12)


def test_quantile_from_log_bisection_oracle():
    target = mp.mpf(-100)
    lo, hi = mp.mpf(-30), mp.mpf(0)
    for _ in range(200):
        mid = (lo + hi) / 2
        if mp.log(mp.ncdf(mid)) < target:
            lo = mid
        else:
            hi = mid
    assert float(normal_quantile_from_log(-100.0)) == pytest.approx(float(lo), abs=1e-10)


def test_quantile_domain():
    with pytest.raises(DomainError):
        normal_quantile(1.0)
    with pytest.raises(DomainError):
        normal_quantile_from_log(0.0)


def test_mills_ratio_matches_oracle():
    for x in (-30.0, -5.0, 0.0, 3.0):
        ref = float(mp.npdf(x) / mp.ncdf(x))
        assert float(mills_ratio(x)) == pytest.approx(ref, rel=1e-12)


def test_trunc_norm_examples():
    assert float(trunc_norm_inverse(0.0, math.inf, 0.5)) == pytest.approx(0.0, abs=1e-15)
    z = float(trunc_norm_inverse(0.0, 0.0, 1 - 1e-16))
    assert -1e-6 < z <= 0.0
    with pytest.raises(EmptyRegion):
        trunc_norm_inverse(0.0, -math.inf, 0.5)


def test_trunc_norm_deep_tail_oracle():
    mu, a, u = 3.0, -8.0, 0.5
    z = float(trunc_norm_inverse(mu, a, u))
    assert z <= a
    # u = Phi(z - mu) / Phi(a - mu) solved by bisection in high precision
    target = mp.log(mp.mpf(u)) + mp.log(mp.ncdf(a - mu))
    lo, hi = mp.mpf(-40), mp.mpf(a)
    for _ in range(200):
        mid = (lo + hi) / 2
        if mp.log(mp.ncdf(mid - mu)) < target:
            lo = mid
        else:
            hi = mid
    assert z == pytest.approx(float(lo), abs=1e-9)


@given(st.floats(-5, 5), st.floats(-10, 10), st.floats(1e-6, 1 - 1e-6), st.floats(1e-6, 1 - 1e-6))
@settings(max_examples=200)
def test_trunc_norm_increasing(mu, a, u1, u2):
    if u1 == u2:
        return
    lo, hi = sorted((u1, u2))
    z1, z2 = float(trunc_norm_inverse(mu, a, lo)), float(trunc_norm_inverse(mu, a, hi))
    assert z1 <= z2 <= a


def test_deterministic():
    x = np.linspace(-20, 20, 101)
    assert np.array_equal(log_phi_bar(x), log_phi_bar(x.copy()))
    assert np.array_equal(trunc_norm_inverse(0.3, x, 0.7), trunc_norm_inverse(0.3, x.copy(), 0.7))
