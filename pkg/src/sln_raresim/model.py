"""Gaussian-copula log-normal sum models.

A model is ln X ~ N(nu, Sigma) with Sigma = L L^T. The sum S = X_1 + ... + X_d
is the object of every estimator in the package.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import solve_triangular

from .exceptions import DimensionMismatch, ModelError, NotPositiveDefinite


@dataclass(frozen=True, eq=False)
class SlnModel:
    """Immutable (nu, Sigma, L) triple.

    Build instances through :func:`new_model`, :func:`equicorrelated` or
    :func:`black_scholes_model`; they validate and factorise Sigma.
    """

    nu: np.ndarray
    Sigma: np.ndarray
    L: np.ndarray
    label: str = field(default="", compare=False)

    def __post_init__(self):
        for arr in (self.nu, self.Sigma, self.L):
            arr.setflags(write=False)

    @property
    def d(self) -> int:
        return self.nu.shape[0]

    @property
    def sigma(self) -> np.ndarray:
        """Marginal log-scale standard deviations."""
        return np.sqrt(np.diag(self.Sigma))

    @property
    def is_iid(self) -> bool:
        s2 = self.Sigma[0, 0]
        return bool(
            np.all(self.nu == self.nu[0])
            and np.allclose(self.Sigma, s2 * np.eye(self.d), rtol=0.0, atol=1e-14 * s2)
        )

    def solve_L(self, b):
        """L^{-1} b by forward substitution (b may be (d,) or (d, m))."""
        return solve_triangular(self.L, b, lower=True)

    def solve_LT(self, b):
        return solve_triangular(self.L, b, lower=True, trans="T")

    def sigma_inv(self, b):
        """Sigma^{-1} b via two triangular solves."""
        return self.solve_LT(self.solve_L(b))

    def to_dict(self) -> dict:
        return {"nu": self.nu.tolist(), "Sigma": self.Sigma.tolist()}


@dataclass(frozen=True)
class BlackScholesSpec:
    X0: float
    r: float
    sigma: float
    T: float
    d: int

    def __post_init__(self):
        if not (self.X0 > 0 and self.sigma > 0 and self.T > 0):
            raise ModelError("Black-Scholes spec needs X0 > 0, sigma > 0, T > 0")
        if int(self.d) != self.d or self.d < 1:
            raise ModelError("Black-Scholes spec needs an integer d >= 1")

    def times(self) -> np.ndarray:
        return np.arange(1, self.d + 1) * (self.T / self.d)


def _cholesky(Sigma: np.ndarray) -> np.ndarray:
    try:
        L = np.linalg.cholesky(Sigma)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(f"covariance is not positive definite: {exc}") from None
    if not np.all(np.isfinite(L)) or np.any(np.diag(L) <= 0.0):
        raise NotPositiveDefinite("covariance is not positive definite")
    return L


def new_model(nu, Sigma, label: str = "") -> SlnModel:
    """Validate (nu, Sigma) and attach the Cholesky factor.

    No jitter is ever added: a Sigma that fails Cholesky is an error.
    """
    nu = np.array(nu, dtype=float).reshape(-1)
    Sigma = np.array(Sigma, dtype=float)
    if Sigma.ndim != 2 or Sigma.shape[0] != Sigma.shape[1]:
        raise DimensionMismatch(f"Sigma must be square, got shape {Sigma.shape}")
    if Sigma.shape[0] != nu.shape[0]:
        raise DimensionMismatch(f"nu has length {nu.shape[0]} but Sigma is {Sigma.shape[0]}x{Sigma.shape[1]}")
    if nu.shape[0] == 0:
        raise DimensionMismatch("empty model")
    if not (np.all(np.isfinite(nu)) and np.all(np.isfinite(Sigma))):
        raise ModelError("nu and Sigma must be finite")
    scale = max(np.max(np.abs(Sigma)), np.finfo(float).tiny)
    if np.max(np.abs(Sigma - Sigma.T)) > 1e-12 * scale:
        raise ModelError("Sigma is not symmetric")
    Sigma = 0.5 * (Sigma + Sigma.T)
    L = _cholesky(Sigma)
    return SlnModel(nu=nu, Sigma=Sigma, L=L, label=label)


def equicorrelated(d: int, rho: float, s2: float = 1.0, nu=0.0, label: str = "") -> SlnModel:
    """Sigma = s2 * (rho 11^T + (1 - rho) I)."""
    if d < 1:
        raise ModelError("d must be >= 1")
    if not s2 > 0:
        raise ModelError("s2 must be positive")
    if d > 1 and not (-1.0 / (d - 1) < rho < 1.0):
        raise NotPositiveDefinite(f"rho={rho} outside (-1/(d-1), 1) for d={d}")
    Sigma = s2 * (rho * np.ones((d, d)) + (1.0 - rho) * np.eye(d))
    nu = np.broadcast_to(np.asarray(nu, dtype=float), (d,))
    return new_model(nu, Sigma, label=label)


def black_scholes_model(spec: BlackScholesSpec, times=None) -> SlnModel:
    """Log-prices of a geometric Brownian motion at the monitoring times.

    nu_i = ln X0 + (r - sigma^2/2) t_i and Sigma_ij = sigma^2 min(t_i, t_j).
    ``times`` overrides the uniform grid t_i = i T / d.
    """
    t = spec.times() if times is None else np.asarray(times, dtype=float)
    if t.ndim != 1 or t.size < 1 or t[0] <= 0 or np.any(np.diff(t) <= 0):
        raise ModelError("monitoring times must be positive and strictly increasing")
    s2 = spec.sigma ** 2
    nu = math.log(spec.X0) + (spec.r - 0.5 * s2) * t
    Sigma = s2 * np.minimum.outer(t, t)
    return new_model(nu, Sigma, label=f"black-scholes(d={t.size})")


def alpha_threshold(model: SlnModel, gamma: float, j: int, z_prefix, partial_sum: float) -> float:
    """Upper truncation point for Z_j (1-based j) given the earlier draws.

    ``partial_sum`` is sum_{k<j} exp(nu_k + (L z)_k), threaded in by the
    caller. Returns -inf when the partial sum already reaches gamma.
    """
    if not 1 <= j <= model.d:
        raise IndexError(f"j={j} outside 1..{model.d}")
    if partial_sum >= gamma:
        return -math.inf
    z_prefix = np.asarray(z_prefix, dtype=float)[: j - 1]
    row = model.L[j - 1]
    lin = float(row[: j - 1] @ z_prefix) if j > 1 else 0.0
    return (math.log(gamma - partial_sum) - model.nu[j - 1] - lin) / row[j - 1]


def check_gamma(gamma: float) -> float:
    gamma = float(gamma)
    if not (gamma > 0 and math.isfinite(gamma)):
        raise ModelError(f"gamma must be positive and finite, got {gamma}")
    return gamma


def model_from_dict(spec: dict) -> SlnModel:
    """Build a model from the JSON schema accepted by the CLI.

    Three layouts are accepted::

        {"nu": [...], "Sigma": [[...]]}
        {"equicorrelated": {"d": .., "rho": .., "s2": .., "nu": [..] or scalar}}
        {"black_scholes": {"X0": .., "r": .., "sigma": .., "T": .., "d": ..}}
    """
    if not isinstance(spec, dict):
        raise ModelError("model file must contain a JSON object")
    if "equicorrelated" in spec:
        e = spec["equicorrelated"]
        return equicorrelated(int(e["d"]), float(e["rho"]), float(e.get("s2", 1.0)), e.get("nu", 0.0))
    if "black_scholes" in spec:
        b = spec["black_scholes"]
        bs = BlackScholesSpec(float(b["X0"]), float(b["r"]), float(b["sigma"]), float(b["T"]), int(b["d"]))
        return black_scholes_model(bs, b.get("times"))
    if "nu" in spec and "Sigma" in spec:
        return new_model(spec["nu"], spec["Sigma"])
    raise ModelError("model JSON needs 'nu'+'Sigma', 'equicorrelated' or 'black_scholes'")


def load_model(path) -> SlnModel:
    try:
        return model_from_dict(json.loads(Path(path).read_text()))
    except json.JSONDecodeError as exc:
        raise ModelError(f"{path}: invalid JSON ({exc})") from None
    except (KeyError, TypeError) as exc:
        raise ModelError(f"{path}: malformed model ({exc!r})") from None
