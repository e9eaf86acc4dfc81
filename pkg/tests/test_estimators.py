from __future__ import annotations

import math

import numpy as np
import pytest
from sklearn.base import clone

from sln_raresim import (CdfEstimator, ConditionalSampler, PdfEstimator, RightTailEstimator, estimate)
from sln_raresim.exceptions import ConfigError, ModelError
from sln_raresim.model import equicorrelated


def test_cdf_estimator_fit_predict():
    est = CdfEstimator(n=20_000, seed=1).fit(equicorrelated(1, 0.0, 1.0))
    p = est.predict([1.0, math.e])
    assert p[0] == pytest.approx(0.5, abs=0.01)
    assert p[1] == pytest.approx(0.8413, abs=0.01)
    assert len(est.results_) == 2 and est.n_features_in_ == 1


def test_predict_log10_beyond_double_range():
    m = equicorrelated(30, 0.0, 0.0625)
    lg = RightTailEstimator(n=20_000).fit(m).predict_log10([1e6])
    assert math.isfinite(lg[0]) and lg[0] < -300


def test_fit_accepts_dict_and_path(tmp_path):
    spec = {"nu": [0.0, 0.0], "Sigma": [[1.0, 0.2], [0.2, 1.0]]}
    p = tmp_path / "m.json"
    import json
    p.write_text(json.dumps(spec))
    a = PdfEstimator(n=5000).fit(spec).predict([2.0])
    b = PdfEstimator(n=5000).fit(str(p)).predict([2.0])
    assert a[0] == b[0]


def test_clone_and_params():
    est = RightTailEstimator(n=10, estimator="ak", theta=0.3)
    c = clone(est)
    assert c.get_params()["estimator"] == "ak" and c.get_params()["theta"] == 0.3


def test_unfitted_predict_raises():
    from sklearn.exceptions import NotFittedError
    with pytest.raises(NotFittedError):
        CdfEstimator().predict([1.0])


def test_bad_estimator_name():
    with pytest.raises(ConfigError):
        PdfEstimator(estimator="crude").fit(equicorrelated(2, 0.0))


def test_nonpositive_gamma():
    est = CdfEstimator(n=100).fit(equicorrelated(2, 0.0))
    with pytest.raises(ModelError):
        est.predict([-1.0])


def test_dispatch_errors():
    m = equicorrelated(2, 0.0)
    with pytest.raises(ConfigError):
        estimate(m, "mode", 1.0)
    with pytest.raises(ConfigError):
        estimate(m, "right-tail", 10.0, 1000, "var-boost")
    with pytest.raises(ConfigError):
        estimate(m, "cdf", 1.0, 1, "new")
    with pytest.raises(ConfigError):
        estimate(m, "cdf", 1.0, 100, "new", stream="sobol", shifts=100)
    with pytest.raises(ConfigError):
        estimate(m, "cdf", 1.0, 100, "new", stream="halton")


def test_seed_reproducible():
    m = equicorrelated(4, 0.3, 1.0)
    a = estimate(m, "cdf", 1.0, 5000, seed=7)
    b = estimate(m, "cdf", 1.0, 5000, seed=7)
    c = estimate(m, "cdf", 1.0, 5000, seed=8)
    assert a.log_mean == b.log_mean != c.log_mean


def test_rqmc_reports_total_evaluations():
    m = equicorrelated(3, 0.0, 1.0)
    e = estimate(m, "cdf", 1.0, 3000, stream="sobol", shifts=10)
    assert e.n == 3000 and e.extra["shifts"] == 10 and math.isfinite(e.re_percent)


def test_gt_default_tilt_flag():
    e = estimate(equicorrelated(3, 0.0, 1.0), "right-tail", 30.0, 2000, "gt")
    assert any(f.startswith("gt-tilt") for f in e.flags)


def test_conditional_sampler():
    m = equicorrelated(3, 0.2, 0.25)
    s = ConditionalSampler(gamma=2.0, seed=3).fit(m)
    x = s.sample(200)
    assert x.shape == (200, 3)
    assert np.all(x.sum(axis=1) <= 2.0 + 1e-12) and np.all(x > 0)
    assert 0 < s.acceptance_rate_ <= 1


def test_conditional_sampler_warns_at_proposal_limit():
    m = equicorrelated(30, 0.0, 0.0625)
    s = ConditionalSampler(gamma=20.0, seed=1).fit(m)
    with pytest.warns(RuntimeWarning, match="proposal limit"):
        x = s.sample(100)
    assert len(x) < 100 and any("proposal limit" in f for f in s.flags_)
