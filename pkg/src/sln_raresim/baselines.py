"""Reference estimators the new methods are measured against.

All are unbiased; all consume uniforms through a :class:`UniformStream`.
An all-zero sample reports estimate 0 and RE 100 %.
"""
from __future__ import annotations

import math
import time

import numpy as np
from scipy import special
from scipy.special import logsumexp

from .exceptions import ModelError, NotIid
from .model import SlnModel, check_gamma
from .righttail import log_tail_terms
from .rng import UniformStream, pseudo_stream, run_kernel
from .specfun import log_phi_bar
from .stats import LogEstimate, combine_independent, estimate_from_parts


def _stream(stream, dim, seed=0):
    if stream is None:
        return pseudo_stream(seed, dim)
    if stream.dim < dim:
        raise ValueError(f"stream supplies {stream.dim} uniforms per row, estimator needs {dim}")
    return stream


def _log_sum(y):
    return logsumexp(y, axis=1)


# ------------------------------------------------------------------ crude


def crude_kernel(model: SlnModel, gamma: float, side: str):
    if side not in ("left", "right"):
        raise ValueError("side must be 'left' or 'right'")
    lg = math.log(gamma)

    def kernel(u):
        y = model.nu + special.ndtri(u[:, : model.d]) @ model.L.T
        s = _log_sum(y)
        hit = s <= lg if side == "left" else s > lg
        return np.where(hit, 0.0, -np.inf), None

    return kernel


def crude_mc(model: SlnModel, gamma: float, side: str = "left", n: int = 10 ** 6,
             stream: UniformStream | None = None, threads: int = 1) -> LogEstimate:
    """Plain indicator average of {S <= gamma} or {S > gamma}."""
    t0 = time.perf_counter()
    gamma = check_gamma(gamma)
    acc = run_kernel(crude_kernel(model, gamma, side), _stream(stream, model.d), int(n), threads=threads)
    return LogEstimate.from_accumulator(acc, time.perf_counter() - t0, estimator="crude", side=side)


# --------------------------------------------------------- variance boost


def boosted_kernel(model: SlnModel, gamma: float, theta: float, below_max: bool = False):
    """Y = nu + L xi / sqrt(1 - theta), weight exp(-theta |xi|^2 / (2 (1 - theta))) / (1 - theta)^(d/2).

    With ``below_max`` the indicator is {S > gamma, max X < gamma} (ISVE residual).
    """
    if not 0.0 <= theta < 1.0:
        raise ValueError("theta must lie in [0, 1)")
    d = model.d
    lg = math.log(gamma)
    scale = 1.0 / math.sqrt(1.0 - theta)
    c = theta / (2.0 * (1.0 - theta))
    base = -0.5 * d * math.log1p(-theta)

    def kernel(u):
        xi = special.ndtri(u[:, :d])
        y = model.nu + scale * (xi @ model.L.T)
        hit = _log_sum(y) > lg
        if below_max:
            hit &= y.max(axis=1) < lg
        lv = np.full(len(y), -np.inf)
        lv[hit] = base - c * np.einsum("ij,ij->i", xi[hit], xi[hit])
        return lv, None

    return kernel


def variance_boosted(model: SlnModel, gamma: float, theta: float, n: int,
                     stream: UniformStream | None = None, threads: int = 1) -> LogEstimate:
    """Right-tail estimator under the inflated covariance Sigma / (1 - theta)."""
    t0 = time.perf_counter()
    gamma = check_gamma(gamma)
    acc = run_kernel(boosted_kernel(model, gamma, theta), _stream(stream, model.d), int(n), threads=threads)
    return LogEstimate.from_accumulator(acc, time.perf_counter() - t0, estimator="var-boost", theta=theta)


# ------------------------------------------------------ Asmussen-Kroese


def ak_kernel(model: SlnModel, gamma: float):
    """d PhiBar((ln[(gamma - sum_{j<d} X_j) v max_{j<d} X_j] - nu) / sigma), iid models only."""
    if not model.is_iid:
        raise NotIid("the Asmussen-Kroese estimator needs iid components")
    d = model.d
    nu, sig = float(model.nu[0]), float(model.sigma[0])
    ld = math.log(d)

    def kernel(u):
        if d == 1:
            lv = np.full(len(u), float(log_phi_bar((math.log(gamma) - nu) / sig)))
            return lv, None
        x = np.exp(nu + sig * special.ndtri(u[:, : d - 1]))
        thr = np.maximum(gamma - x.sum(axis=1), x.max(axis=1))
        return ld + log_phi_bar((np.log(thr) - nu) / sig), None

    return kernel


def asmussen_kroese(model: SlnModel, gamma: float, n: int, stream: UniformStream | None = None,
                    threads: int = 1) -> LogEstimate:
    """Conditional Monte Carlo on the last term; uses max(d - 1, 1) uniforms per replication."""
    t0 = time.perf_counter()
    gamma = check_gamma(gamma)
    kern = ak_kernel(model, gamma)
    acc = run_kernel(kern, _stream(stream, max(model.d - 1, 1)), int(n), threads=threads)
    return LogEstimate.from_accumulator(acc, time.perf_counter() - t0, estimator="ak")


# ------------------------------------------------------------------- ISVE


def default_isve_theta(gamma: float) -> float:
    """theta = 1 - 1 / ln^2(gamma), clipped into [0, 1)."""
    lg = math.log(gamma)
    if lg <= 1.0:
        return 0.0
    return 1.0 - 1.0 / (lg * lg)


def _conditional_factors(model: SlnModel):
    """Per k: regression coefficients of Y_{-k} on Y_k and the conditional Cholesky factor."""
    d = model.d
    S = model.Sigma
    out = []
    for k in range(d):
        rest = np.delete(np.arange(d), k)
        beta = S[rest, k] / S[k, k]
        C = S[np.ix_(rest, rest)] - np.outer(S[rest, k], S[k, rest]) / S[k, k]
        C = 0.5 * (C + C.T)
        Lc = np.linalg.cholesky(C) if d > 1 else np.zeros((0, 0))
        out.append((rest, beta, Lc))
    return out


def mixture_sampler(model: SlnModel, gamma: float):
    """Map (m, d + 1) uniforms to draws of Y = ln X from the max-exceedance mixture g.

    The last column picks component k with probability P(X_k > gamma) / ell_as;
    coordinate k is drawn above ln gamma by inverse cdf and the others from
    the Gaussian conditional on Y_k.
    """
    d = model.d
    logs = log_tail_terms(model, gamma)
    las = float(logsumexp(logs))
    cum = np.cumsum(np.exp(logs - las))
    cum[-1] = 1.0
    a = (math.log(gamma) - model.nu) / model.sigma
    facts = _conditional_factors(model)

    def draw(u):
        comp = np.minimum(np.searchsorted(cum, u[:, d], side="right"), d - 1)
        y = np.empty((len(u), d))
        for k in range(d):
            rows = comp == k
            if not rows.any():
                continue
            uk = u[rows]
            zk = -special.ndtri_exp(np.log(uk[:, k]) + float(log_phi_bar(a[k])))
            zk = np.maximum(zk, a[k])
            yk = model.nu[k] + model.sigma[k] * zk
            rest, beta, Lc = facts[k]
            yr = model.nu[rest] + np.outer(yk - model.nu[k], beta)
            if rest.size:
                yr += special.ndtri(uk[:, rest]) @ Lc.T
            blk = np.empty((rows.sum(), d))
            blk[:, k] = yk
            blk[:, rest] = yr
            y[rows] = blk
        return y

    return draw, las


def mixture_kernel(model: SlnModel, gamma: float):
    """ln(ell_as / N), N the number of coordinates above gamma, with Y from the mixture."""
    lg = math.log(gamma)
    draw, las = mixture_sampler(model, gamma)

    def kernel(u):
        count = np.sum(draw(u) > lg, axis=1)
        return las - np.log(np.maximum(count, 1)), None

    return kernel


def isve(model: SlnModel, gamma: float, theta: float | None = None, n1: int = 500_000, n2: int = 500_000,
         stream: UniformStream | None = None, threads: int = 1) -> LogEstimate:
    """P(M > gamma) by the mixture estimator plus a variance-boosted residual.

    Part one uses stream rows [0, n1) (d + 1 uniforms); the residual uses
    rows [n1, n1 + n2) and the first d columns.
    """
    t0 = time.perf_counter()
    gamma = check_gamma(gamma)
    theta = default_isve_theta(gamma) if theta is None else float(theta)
    stream = _stream(stream, model.d + 1)
    acc1 = run_kernel(mixture_kernel(model, gamma), stream, int(n1), threads=threads)
    acc2 = run_kernel(boosted_kernel(model, gamma, theta, below_max=True), stream, int(n2), start=int(n1),
                      threads=threads)
    parts_m, parts_v = [], []
    for acc in (acc1, acc2):
        parts_m.append(acc.log_abs_mean)
        parts_v.append(acc.log_var - math.log(acc.count) if acc.count >= 2 else -math.inf)
    lm, lv = combine_independent(parts_m, parts_v)
    return estimate_from_parts(lm, lv, int(n1) + int(n2), time.perf_counter() - t0, estimator="isve", theta=theta,
                               log10_ell1=parts_m[0] / math.log(10), log10_ell2=parts_m[1] / math.log(10))


# ------------------------------------------------------ single-tilt (GT)


def gt_kernel(model: SlnModel, gamma: float, mu):
    mu = np.asarray(mu, dtype=float)
    if mu.shape != (model.d,):
        raise ModelError(f"tilt must have length {model.d}")
    eta = model.solve_L(mu)
    base = -0.5 * float(eta @ eta)
    lg = math.log(gamma)

    def kernel(u):
        xi = special.ndtri(u[:, : model.d])
        y = model.nu + mu + xi @ model.L.T
        hit = _log_sum(y) >= lg
        lv = np.full(len(y), -np.inf)
        lv[hit] = base - xi[hit] @ eta
        return lv, None

    return kernel


def gt_right_tail(model: SlnModel, gamma: float, mu, n: int, stream: UniformStream | None = None,
                  threads: int = 1) -> LogEstimate:
    """Single mean-shift estimator of P(S >= gamma) with a caller-supplied tilt."""
    t0 = time.perf_counter()
    gamma = check_gamma(gamma)
    acc = run_kernel(gt_kernel(model, gamma, mu), _stream(stream, model.d), int(n), threads=threads)
    return LogEstimate.from_accumulator(acc, time.perf_counter() - t0, estimator="gt")
