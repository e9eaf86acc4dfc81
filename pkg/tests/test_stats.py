from __future__ import annotations

import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sln_raresim.exceptions import Insufficient
from sln_raresim.stats import (SCHEMA, LogAccumulator, LogEstimate, combine_independent, estimate_from_parts,
                               format_log10, log_mean_var, log_sample_var_of_var, relative_error, sample_var_of_var, wnrv)


def _acc(values):
    v = np.asarray(values, dtype=float)
    with np.errstate(divide="ignore"):
        return LogAccumulator.from_batch(np.log(np.abs(v)), np.sign(v))


def test_equal_values():
    lm, lv = log_mean_var(LogAccumulator.from_batch([0.0, 0.0]))
    assert lm == 0.0
    assert lv == -math.inf


def test_tiny_values_high_precision():
    acc = LogAccumulator.from_batch([-700.0, -701.0])
    lm, lv = log_mean_var(acc)
    mp.mp.dps = 200
    a, b = mp.exp(-700), mp.exp(-701)
    m = (a + b) / 2
    v = ((a - m) ** 2 + (b - m) ** 2)
    assert lm == pytest.approx(float(mp.log(m)), rel=1e-12)
    assert lv == pytest.approx(float(mp.log(v)), rel=1e-12)


def test_values_far_below_double_range():
    acc = LogAccumulator.from_batch([-2000.0, -2000.5, -2001.0])
    lm, lv = log_mean_var(acc)
    assert math.isfinite(lm) and math.isfinite(lv)
    ref = math.log((1 + math.exp(-0.5) + math.exp(-1.0)) / 3) - 2000.0
    assert lm == pytest.approx(ref, rel=1e-14)


def test_bernoulli_variance(rng):
    p = 0.3
    x = (rng.random(100_000) < p).astype(float)
    acc = _acc(x)
    var = math.exp(acc.log_var)
    assert var == pytest.approx(p * (1 - p), abs=3 * math.sqrt(p * (1 - p)) * 2 / math.sqrt(len(x)))


def test_variance_needs_two():
    with pytest.raises(Insufficient):
        LogAccumulator.from_batch([0.0]).log_var
    with pytest.raises(Insufficient):
        sample_var_of_var(LogAccumulator.from_batch([0.0, 0.0, 0.0]))


def test_relative_error_examples():
    assert relative_error(0.0, -math.inf, 10) == 0.0
    assert relative_error(-math.inf, -math.inf, 10) == 100.0
    # Bernoulli p = 1/2, n = 1e4: sqrt(pq / n) / p = 1 %
    assert relative_error(math.log(0.5), math.log(0.25), 10_000) == pytest.approx(1.0, rel=1e-12)


def test_wnrv_examples():
    assert wnrv(100.0, 1.0) == 1.0
    assert wnrv(0.198, 2.0) == pytest.approx(3.9204e-6 * 2.0, rel=1e-12)


def test_ref_quadruples():
    # (ell, RE %, seconds) -> variance and back; WNRV column of the cdf table row gamma = 12
    ell, re, n, t = 1.68e-4, 0.198, 10 ** 6, 6.045
    var = (re / 100 * ell) ** 2 * n
    assert relative_error(math.log(ell), math.log(var), n) == pytest.approx(re, rel=1e-12)
    assert wnrv(re, t) == pytest.approx(2.37e-5, rel=2e-3)


@given(st.lists(st.floats(-50, 5), min_size=8, max_size=64), st.integers(1, 7))
@settings(max_examples=100)
def test_merge_associativity(logs, cut):
    logs = np.array(logs)
    seq = LogAccumulator.from_batch(logs)
    seq2 = LogAccumulator()
    for v in logs:
        seq2.merge(LogAccumulator.from_batch([v]))
    # binary tree of single values
    parts = [LogAccumulator.from_batch([v]) for v in logs]
    while len(parts) > 1:
        parts = [parts[i].merge(parts[i + 1]) if i + 1 < len(parts) else parts[i] for i in range(0, len(parts), 2)]
    tree = parts[0]
    k = cut * len(logs) // 8
    split = LogAccumulator.from_batch(logs[:k]).merge(LogAccumulator.from_batch(logs[k:]))
    for other in (seq2, tree, split):
        assert other.count == seq.count
        assert other.log_abs_mean == pytest.approx(seq.log_abs_mean, rel=1e-12, abs=1e-12)
        if seq.m2 > 1e-12 * seq.mean ** 2 * len(logs):
            assert other.log_var == pytest.approx(seq.log_var, rel=1e-12, abs=1e-9)


def test_sign_split():
    a = 1e-200
    acc = _acc([a, -a])
    assert abs(acc.mean) * math.exp(acc.log_scale) <= 1e-300
    assert acc.log_abs_mean == -math.inf


def test_signed_mean():
    acc = _acc([3.0, -1.0, 2.0, -2.0])
    assert acc.sign == 1.0
    assert math.exp(acc.log_abs_mean) == pytest.approx(0.5)


def test_var_of_var_constant():
    assert sample_var_of_var(LogAccumulator.from_batch(np.zeros(10))) == 0.0


def test_var_of_var_normal(rng):
    # the plug-in estimator has O(1/n) bias, so the limit is checked at large n
    n, reps = 2000, 2000
    x = rng.normal(size=(reps, n))
    s2 = x.var(axis=1, ddof=1)
    est = np.array([math.exp(log_sample_var_of_var(_acc(row + 10.0))) for row in x])
    # Var(S^2) = 2 sigma^4 / (n - 1) for normal data
    target = 2.0 / (n - 1)
    assert est.mean() == pytest.approx(target, abs=3 * est.std() / math.sqrt(reps))
    assert s2.var() == pytest.approx(target, rel=0.15)


def test_var_of_var_bernoulli_formula():
    x = np.array([1.0] * 3 + [0.0] * 7)
    n = len(x)
    m2 = np.mean((x - x.mean()) ** 2)
    m4 = np.mean((x - x.mean()) ** 4)
    ref = m4 / n - m2 * m2 * (n - 3) / (n * (n - 1))
    with np.errstate(divide="ignore"):
        got = sample_var_of_var(LogAccumulator.from_batch(np.log(x)))
    assert got == pytest.approx(ref, rel=1e-12)


def test_estimate_records():
    acc = _acc([1e-300, 2e-300, 3e-300])
    est = LogEstimate.from_accumulator(acc, 0.5, flags=["x"], estimator="t")
    assert est.estimate == pytest.approx(2e-300)
    assert est.re_percent >= 0
    assert est.wnrv == pytest.approx((est.re_percent / 100) ** 2 * 0.5)
    d = est.to_dict()
    assert d["schema"] == SCHEMA == "sln-raresim/1"
    assert d["estimate"] == "2.00e-300"
    zero = LogEstimate.from_accumulator(LogAccumulator.from_batch([-math.inf] * 5))
    assert zero.estimate == 0.0 and zero.re_percent == 100.0 and "all-zero" in zero.flags


def test_format_log10():
    assert format_log10(-400.5) == "3.16e-401"
    assert format_log10(math.log10(9.996e-5)) == "1.00e-04"
    assert format_log10(-math.inf) == "0"
    assert format_log10(2.0, sign=-1) == "-1.00e+02"


def test_combine_independent():
    m, v = combine_independent([math.log(1.0), math.log(2.0), -math.inf], [math.log(0.1), -math.inf, -math.inf])
    assert math.exp(m) == pytest.approx(3.0)
    assert math.exp(v) == pytest.approx(0.1)
    est = estimate_from_parts(m, v, 100)
    assert est.re_percent == pytest.approx(100 * math.sqrt(0.1) / 3)
    assert "all-zero" in estimate_from_parts(-math.inf, -math.inf, 10).flags
