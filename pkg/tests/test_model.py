from __future__ import annotations

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sln_raresim.exceptions import DimensionMismatch, ModelError, NotPositiveDefinite
from sln_raresim.model import (BlackScholesSpec, alpha_threshold, black_scholes_model, check_gamma, equicorrelated,
                               load_model, model_from_dict, new_model)
from sln_raresim.psi import sample_sequential_batch


def test_scalar_model():
    m = new_model([0.0], [[1.0]])
    assert m.L.tolist() == [[1.0]]
    assert m.d == 1


def test_diagonal_cholesky():
    m = new_model(np.zeros(20), np.diag(np.arange(1.0, 21.0)))
    assert np.allclose(m.L, np.diag(np.sqrt(np.arange(1.0, 21.0))), rtol=0, atol=1e-15)


def test_invalid_rho_eigen_oracle():
    S = -2.0 * np.ones((3, 3)) + 3.0 * np.eye(3)
    assert np.linalg.eigvalsh(S).min() < 0
    with pytest.raises(NotPositiveDefinite):
        new_model(np.zeros(3), S)
    with pytest.raises(NotPositiveDefinite):
        equicorrelated(3, -2.0, 1.0)


def test_dimension_checks():
    with pytest.raises(DimensionMismatch):
        new_model([0.0, 0.0], [[1.0]])
    with pytest.raises(DimensionMismatch):
        new_model([0.0], [[1.0, 0.0]])
    with pytest.raises(ModelError):
        new_model([0.0, 0.0], [[1.0, 0.5], [0.4, 1.0]])


def test_equicorrelated_examples():
    m = equicorrelated(2, 0.0, 1.0)
    assert np.array_equal(m.Sigma, np.eye(2))
    m = equicorrelated(10, 0.9, 0.0625)
    assert m.Sigma[0, 1] == pytest.approx(0.05625, rel=1e-15)
    assert m.Sigma[0, 0] == pytest.approx(0.0625, rel=1e-15)
    m = equicorrelated(30, 0.9, 0.0625)
    assert np.linalg.norm(m.L @ m.L.T - m.Sigma) <= 1e-10 * np.linalg.norm(m.Sigma)


def test_black_scholes_examples():
    m = black_scholes_model(BlackScholesSpec(1.0, 0.0, 1.0, 1.0, 1))
    assert m.nu.tolist() == [-0.5]
    assert m.Sigma.tolist() == [[1.0]]
    spec = BlackScholesSpec(50.0, 0.07, 0.25, 4 / 12, 88)
    m = black_scholes_model(spec)
    t1 = (4 / 12) / 88
    assert m.nu[0] == pytest.approx(math.log(50) + (0.07 - 0.03125) * t1, rel=1e-14)
    assert m.Sigma[0, 0] == pytest.approx(0.0625 * t1, rel=1e-14)
    t = spec.times()
    assert np.array_equal(m.Sigma, m.Sigma.T)
    assert np.array_equal(m.Sigma, 0.0625 * np.minimum.outer(t, t))


def test_black_scholes_spec_validation():
    with pytest.raises(ModelError):
        BlackScholesSpec(-1.0, 0.0, 1.0, 1.0, 1)
    with pytest.raises(ModelError):
        BlackScholesSpec(1.0, 0.0, 1.0, 1.0, 0)


def test_black_scholes_custom_times():
    spec = BlackScholesSpec(1.0, 0.0, 1.0, 1.0, 3)
    m = black_scholes_model(spec, times=[0.1, 0.5, 2.0])
    assert m.Sigma[2, 1] == 0.5
    with pytest.raises(ModelError):
        black_scholes_model(spec, times=[0.5, 0.1])


def test_alpha_examples():
    m = new_model([0.0], [[1.0]])
    assert alpha_threshold(m, 1.0, 1, [], 0.0) == 0.0
    assert alpha_threshold(m, math.e, 1, [], 0.0) == pytest.approx(1.0)
    assert alpha_threshold(m, 1.0, 1, [], 2.0) == -math.inf


def test_alpha_direct_formula_d2():
    m = new_model([0.0, 0.0], np.eye(2))
    z1 = -0.3
    ps = math.exp(z1)
    assert alpha_threshold(m, 3.0, 2, [z1], ps) == pytest.approx(math.log(3.0 - math.exp(z1)), rel=1e-15)


def test_alpha_decreasing_in_partial_sum():
    m = equicorrelated(3, 0.4, 2.0)
    vals = [alpha_threshold(m, 10.0, 3, [0.1, -0.2], p) for p in np.linspace(0, 9.9, 50)]
    assert np.all(np.diff(vals) < 0)


@given(st.integers(1, 8), st.floats(-0.1, 0.9), st.floats(0.01, 50.0), st.integers(0, 2 ** 31))
@settings(max_examples=60, deadline=None)
def test_nested_event(d, rho, gamma, seed):
    m = equicorrelated(d, rho, 1.5, nu=0.3)
    u = np.random.default_rng(seed).random((200, d))
    z, lw, _ = sample_sequential_batch(m, gamma, np.zeros(d), u)
    s = np.exp(m.nu + z @ m.L.T).sum(axis=1)
    ok = np.isfinite(lw)
    assert np.all(s[ok] <= gamma * (1 + 1e-12))


def test_gamma_validation():
    for g in (0.0, -1.0, math.inf, math.nan):
        with pytest.raises(ModelError):
            check_gamma(g)


def test_model_json_layouts(tmp_path):
    p = tmp_path / "m.json"
    p.write_text(json.dumps({"nu": [0, 1], "Sigma": [[1, 0.2], [0.2, 2]]}))
    assert load_model(p).d == 2
    assert model_from_dict({"equicorrelated": {"d": 4, "rho": 0.5, "s2": 2.0}}).Sigma[0, 1] == 1.0
    bs = model_from_dict({"black_scholes": {"X0": 50, "r": 0.07, "sigma": 0.25, "T": 0.3333, "d": 5}})
    assert bs.d == 5
    p.write_text("{bad")
    with pytest.raises(ModelError):
        load_model(p)
    p.write_text(json.dumps({"nu": [0]}))
    with pytest.raises(ModelError):
        load_model(p)


def test_model_is_immutable():
    m = equicorrelated(3, 0.2, 1.0)
    with pytest.raises(Exception):
        m.nu = np.ones(3)
