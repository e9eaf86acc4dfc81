from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.stats import qmc

from sln_raresim.exceptions import DimTooLarge, Insufficient
from sln_raresim.rng import (U_MAX, U_MIN, LogAccumulator, convergence_slope, exp1_from_uniform, max_sobol_dim,
                             pseudo_stream, rqmc_estimate, run_kernel, sobol_points, sobol_stream, split_seed)


def test_pseudo_reproducible():
    a = pseudo_stream(7, 3).uniforms(0, 1000)
    b = pseudo_stream(7, 3).uniforms(0, 1000)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, pseudo_stream(8, 3).uniforms(0, 1000))


def test_pseudo_moments():
    u = pseudo_stream(1, 4).uniforms(0, 10 ** 6)
    assert np.all(np.abs(u.mean(axis=0) - 0.5) < 0.002)
    assert u.min() >= U_MIN and u.max() <= U_MAX


def test_pseudo_partition():
    s = pseudo_stream(3, 2)
    whole = s.uniforms(0, 10 ** 6)
    parts = np.vstack([s.uniforms(0, 500_000), s.uniforms(500_000, 500_000)])
    assert np.array_equal(whole, parts)
    odd = np.vstack([s.uniforms(0, 12_345), s.uniforms(12_345, 10 ** 6 - 12_345)])
    assert np.array_equal(whole, odd)


def test_sobol_first_point_clamped():
    u = sobol_stream(5).uniforms(0, 1)
    assert np.all(u == U_MIN)


def test_sobol_matches_reference_generator():
    d = 40
    ours = sobol_points(d, 0, 1024)
    ref = qmc.Sobol(d, scramble=False).random(1024)
    assert np.array_equal(np.sort(ours, axis=0), np.sort(ref, axis=0))
    assert np.array_equal(ours, ref)


def test_sobol_random_access():
    full = sobol_points(7, 0, 5000)
    assert np.array_equal(full[1234:4321], sobol_points(7, 1234, 4321 - 1234))


@pytest.mark.parametrize("k", [4, 8, 12])
def test_sobol_stratified(k):
    pts = sobol_points(30, 0, 2 ** k)
    for j in range(30):
        cells = np.floor(pts[:, j] * 2 ** k).astype(int)
        assert np.array_equal(np.sort(cells), np.arange(2 ** k))


def test_sobol_dimension_limit():
    assert max_sobol_dim() >= 21201
    with pytest.raises(DimTooLarge):
        sobol_stream(max_sobol_dim() + 1)


def test_shift_is_mod_one():
    s = sobol_stream(3, 11)
    raw = sobol_points(3, 0, 64)
    u = s.uniforms(0, 64)
    expect = np.clip((raw + s.shift) % 1.0, U_MIN, U_MAX)
    assert np.allclose(u, expect, atol=1e-15)


def _quadratic_kernel(d):
    # product of 1-d quadratics with unit integral: prod 3 u^2
    def k(u):
        v = np.prod(3.0 * u[:, :d] ** 2, axis=1)
        return np.log(v), None
    return k


def test_smooth_integrand_rmse_slope():
    d = 3
    slope, rows = convergence_slope(_quadratic_kernel(d), d, [2 ** k for k in range(10, 17)], R=20)
    assert slope < -0.9


def test_constant_kernel_zero_variance():
    est = rqmc_estimate(lambda u: (np.zeros(len(u)), None), 4, 256, R=5)
    assert est.re_percent == 0.0
    assert est.estimate == pytest.approx(1.0)
    with pytest.raises(Insufficient):
        rqmc_estimate(lambda u: (np.zeros(len(u)), None), 4, 256, R=1)


def test_rqmc_unbiased_against_mc():
    d = 3
    k = _quadratic_kernel(d)
    q = rqmc_estimate(k, d, 1024, R=50, seed=1)
    mc = rqmc_estimate(k, d, 1024, R=50, seed=1, kind="pseudo")
    se = math.hypot(q.std_error, mc.std_error)
    assert abs(q.estimate - mc.estimate) <= 3 * se
    assert abs(q.estimate - 1.0) <= 3 * q.std_error


def test_bernoulli_slope():
    def k(u):
        return np.where(u[:, 0] < 0.3, 0.0, -np.inf), None
    slope, _ = convergence_slope(k, 1, [2 ** j for j in range(8, 14)], R=30, kind="pseudo")
    assert -0.6 <= slope <= -0.4


def test_run_kernel_thread_invariance():
    s = pseudo_stream(5, 2)
    k = lambda u: (np.log(u[:, 0] + u[:, 1]), None)  # noqa: E731
    a = run_kernel(k, s, 300_000, block=10_000, threads=1)
    b = run_kernel(k, s, 300_000, block=10_000, threads=4)
    assert (a.count, a.log_scale, a.mean, a.m2) == (b.count, b.log_scale, b.mean, b.m2)
    c = run_kernel(k, s, 100_000, block=10_000).merge(run_kernel(k, s, 200_000, start=100_000, block=10_000))
    assert c.log_abs_mean == pytest.approx(a.log_abs_mean, rel=1e-14)


def test_exp1_and_seeds():
    e = exp1_from_uniform(pseudo_stream(0, 1).uniforms(0, 200_000)[:, 0])
    assert e.min() > 0 and abs(e.mean() - 1) < 0.01
    assert split_seed(1, 2) == split_seed(1, 2) != split_seed(1, 3)
    assert isinstance(LogAccumulator(), LogAccumulator)
