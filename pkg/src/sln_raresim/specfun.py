"""Normal-distribution kernels evaluated in log space.

Everything that can underflow is returned as a logarithm. The heavy lifting
is delegated to ``scipy.special.log_ndtr`` (accurate to ~1e-14 relative over
the whole real line) and ``scipy.special.ndtri_exp`` (inverse of
``log_ndtr``); this module fixes the conventions used by the estimators and
adds the truncated-normal inverse.

All functions accept scalars or numpy arrays and broadcast.
"""
from __future__ import annotations

import numpy as np
from scipy import special

from .exceptions import DomainError, EmptyRegion

LOG_HALF = float(np.log(0.5))
_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


def log_phi_bar(x):
    """ln of the standard normal upper tail, ln P(Z > x)."""
    return special.log_ndtr(-np.asarray(x, dtype=float))


def log_phi(x):
    """ln of the standard normal cdf, ln P(Z <= x)."""
    return special.log_ndtr(np.asarray(x, dtype=float))


def phi_bar(x):
    return np.exp(log_phi_bar(x))


def log_pdf(x):
    x = np.asarray(x, dtype=float)
    return -0.5 * x * x - _LOG_SQRT_2PI


def mills_ratio(x):
    """phi(x) / Phi(x), computed without forming either factor.

    This is the derivative of ``log_phi`` and stays finite for x -> -inf,
    where it behaves like -x.
    """
    x = np.asarray(x, dtype=float)
    return np.exp(log_pdf(x) - log_phi(x))


def normal_quantile(p):
    """Inverse of the standard normal cdf on the open interval (0, 1)."""
    p = np.asarray(p, dtype=float)
    if np.any(~((p > 0.0) & (p < 1.0))):
        raise DomainError("normal_quantile requires 0 < p < 1")
    # upper half via the complement keeps relative accuracy in the right tail
    # of 1 - p as well as the left tail of p
    return np.where(p <= 0.5, special.ndtri(p), -special.ndtri(1.0 - p))


def normal_quantile_from_log(log_p):
    """x such that ln Phi(x) = log_p, for log_p < 0.

    Works far below the underflow threshold of p itself.
    """
    log_p = np.asarray(log_p, dtype=float)
    if np.any(~(log_p < 0.0)):
        raise DomainError("normal_quantile_from_log requires log_p < 0")
    return special.ndtri_exp(log_p)


def trunc_norm_inverse(mu, a, u):
    """u-quantile of N(mu, 1) truncated to (-inf, a).

    Computed as ``mu + ndtri_exp(ln u + ln Phi(a - mu))``; this stays exact
    when Phi(a - mu) underflows and is strictly increasing in u. ``a`` may be
    +inf; a = -inf (empty region) raises :class:`EmptyRegion`.
    """
    mu = np.asarray(mu, dtype=float)
    a = np.asarray(a, dtype=float)
    u = np.asarray(u, dtype=float)
    if np.any(a == -np.inf):
        raise EmptyRegion("truncation upper bound is -inf")
    if np.any(~((u > 0.0) & (u < 1.0))):
        raise DomainError("trunc_norm_inverse requires 0 < u < 1")
    z = mu + special.ndtri_exp(np.log(u) + special.log_ndtr(a - mu))
    # rounding can push the quantile a hair past the bound
    return np.minimum(z, a)
