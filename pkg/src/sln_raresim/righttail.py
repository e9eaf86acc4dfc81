"""Right tail P(S > gamma) stratified by the index of the largest term.

{S > gamma} is split into the disjoint pieces {S > gamma, X_k = M}, each
estimated under its own Gaussian mean shift mu_k, with replications
allocated in proportion to P(X_k > gamma).
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import special
from scipy.special import logsumexp

from .model import SlnModel, check_gamma
from .optimize import RightTilt, solve_right_tilt
from .rng import UniformStream, pseudo_stream, run_kernel
from .specfun import log_phi_bar
from .stats import LogAccumulator, LogEstimate, combine_independent, estimate_from_parts, sample_var_of_var


def log_tail_terms(model: SlnModel, gamma: float) -> np.ndarray:
    """ln P(X_k > gamma) for every k."""
    gamma = check_gamma(gamma)
    return log_phi_bar((math.log(gamma) - model.nu) / model.sigma)


def ell_as(model: SlnModel, gamma: float) -> float:
    """ln of the first-order asymptote sum_k PhiBar((ln gamma - nu_k) / sigma_k)."""
    return float(logsumexp(log_tail_terms(model, gamma)))


@dataclass
class StratumResult:
    k: int
    n_k: int
    acc: LogAccumulator = field(default_factory=LogAccumulator)

    @property
    def log_mean(self) -> float:
        return self.acc.log_abs_mean if self.n_k else -math.inf

    @property
    def log_second_moment(self) -> float:
        """ln of the sample mean of h^2 (n divisor)."""
        a = self.acc
        if a.count == 0 or a.log_scale == -math.inf:
            return -math.inf
        return 2 * a.log_scale + math.log(a.m2 / a.count + a.mean * a.mean)

    @property
    def log_fourth_central(self) -> float:
        a = self.acc
        if a.count == 0 or a.m4 <= 0:
            return -math.inf
        return 4 * a.log_scale + math.log(a.m4 / a.count)

    @property
    def log_var_of_mean(self) -> float:
        """ln(sample variance / n_k); -inf when fewer than two replications."""
        if self.n_k < 2:
            return -math.inf
        return self.acc.log_var - math.log(self.n_k)


def hbar_kernel(model: SlnModel, gamma: float, k: int, eta):
    """Per-replication ln h_k with Y = nu + L(eta + xi), xi = Phi^{-1}(u).

    ln weight = -|eta|^2 / 2 - eta . xi; the indicator is S > gamma with the
    lowest-index maximum equal to k.
    """
    eta = np.asarray(eta, dtype=float)
    mu = model.L @ eta
    base = -0.5 * float(eta @ eta)
    lg = math.log(gamma)

    def kernel(u):
        xi = special.ndtri(u[:, : model.d])
        y = model.nu + mu + xi @ model.L.T
        hit = (logsumexp(y, axis=1) > lg) & (np.argmax(y, axis=1) == k)
        lv = np.full(len(y), -np.inf)
        lv[hit] = base - xi[hit] @ eta
        return lv, None

    return kernel


def estimate_hbar(model: SlnModel, gamma: float, k: int, tilt: RightTilt, n_k: int,
                  stream: UniformStream | None = None, start: int = 0, threads: int = 1) -> StratumResult:
    """Estimate P(S > gamma, X_k = M) from stream rows [start, start + n_k) (k is 0-based)."""
    gamma = check_gamma(gamma)
    stream = stream or pseudo_stream(0, model.d)
    eta = getattr(tilt, "eta", None)
    if eta is None:
        eta = model.solve_L(tilt.mu)
    if n_k <= 0:
        return StratumResult(k=k, n_k=0)
    acc = run_kernel(hbar_kernel(model, gamma, k, eta), stream, int(n_k), start=start, threads=threads)
    return StratumResult(k=k, n_k=int(n_k), acc=acc)


def allocate_strata(model: SlnModel, gamma: float, n: int, rng=None) -> np.ndarray:
    """Randomised proportional allocation with E[n_k] = n P(X_k > gamma) / ell_as.

    Real allocations are floored and the leftover units go to strata chosen
    by systematic sampling on the fractional parts, so each stratum gets at
    most one extra unit with probability equal to its fractional part and
    the counts always sum to n.
    """
    n = int(n)
    logs = log_tail_terms(model, gamma)
    p = np.exp(logs - logsumexp(logs))
    return _systematic_round(n * p, n, np.random.default_rng(rng))


def _systematic_round(real: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    base = np.floor(real).astype(np.int64)
    left = n - int(base.sum())
    if left <= 0:
        return base
    frac = np.clip(real - base, 0.0, None)
    frac *= left / frac.sum()
    edges = np.concatenate([[0.0], np.cumsum(frac)])
    picks = rng.random() + np.arange(left)
    idx = np.searchsorted(edges, picks, side="right") - 1
    idx = np.clip(idx, 0, len(real) - 1)
    np.add.at(base, idx, 1)
    return base


def _exchangeable(model: SlnModel) -> bool:
    d = model.d
    if d == 1:
        return True
    off = model.Sigma[~np.eye(d, dtype=bool)]
    return bool(np.all(model.nu == model.nu[0]) and np.all(np.diag(model.Sigma) == model.Sigma[0, 0])
                and np.all(off == off[0]))


def solve_right_tilts(model: SlnModel, gamma: float) -> list:
    """One tilt per stratum; exchangeable models are solved once and permuted."""
    if _exchangeable(model) and model.d > 1:
        t0 = solve_right_tilt(model, gamma, 0)
        tilts = []
        for k in range(model.d):
            perm = np.arange(model.d)
            perm[[0, k]] = perm[[k, 0]]
            mu = t0.mu[perm]
            t = RightTilt(k=k, mu=mu, g1_slack=t0.g1_slack, g2_slack=t0.g2_slack, objective=t0.objective,
                          kkt_residual=t0.kkt_residual, converged=t0.converged, fallback=t0.fallback,
                          message=t0.message)
            t.eta = model.solve_L(mu)
            tilts.append(t)
        return tilts
    return [solve_right_tilt(model, gamma, k) for k in range(model.d)]


def estimate_right_tail(model: SlnModel, gamma: float, n: int, stream: UniformStream | None = None,
                        seed: int = 0, tilts: list | None = None, threads: int = 1) -> LogEstimate:
    """Stratified estimator sum_k mean(h_k) of P(S > gamma).

    Strata consume disjoint consecutive row ranges of ``stream``; the
    allocation is randomised with ``seed``. RE comes from the per-stratum
    sample variances (independent strata).
    """
    t0 = time.perf_counter()
    gamma = check_gamma(gamma)
    stream = stream or pseudo_stream(seed, model.d)
    tilts = tilts or solve_right_tilts(model, gamma)
    counts = allocate_strata(model, gamma, n, rng=np.random.SeedSequence([seed & 0xFFFFFFFF, 0xA110C]))
    flags = []
    logs = log_tail_terms(model, gamma)
    results = []
    start = 0
    for k, t in enumerate(tilts):
        results.append(estimate_hbar(model, gamma, k, t, int(counts[k]), stream, start, threads=threads))
        start += int(counts[k])
    log_means = np.array([r.log_mean for r in results])
    log_vars = [r.log_var_of_mean for r in results]
    thin = [r.k for r in results if r.n_k < 2]
    if thin:
        flags.append(f"empty_strata: {len(thin)} strata with fewer than 2 replications")
        # unknown spread there: bound it by the marginal tail probability
        log_vars += [2.0 * logs[k] for k in thin]
    bad = [t.k for t in tilts if not t.converged]
    if bad:
        flags.append(f"tilt fallback or non-convergence in {len(bad)} strata")
    log_mean, log_v = combine_independent(log_means, log_vars)
    strata = [{
        "k": r.k + 1, "n_k": r.n_k,
        "log10_mean": r.log_mean / math.log(10),
        "log10_var": (r.acc.log_var / math.log(10)) if r.n_k >= 2 and r.acc.m2 > 0 else None,
        "tilt": tilts[r.k].mu.tolist(),
    } for r in results]
    return estimate_from_parts(log_mean, log_v, n, time.perf_counter() - t0, flags, estimator="new",
                               log_ell_as=ell_as(model, gamma), strata=strata)


def second_order_residual(rho: float, d: int, gamma: float) -> float:
    """ln of d(d-1) exp((1 - rho^2)/2) ln(gamma) / gamma^(1 - rho) PhiBar(ln gamma).

    Standardised equicorrelated model (unit log-variances); needs gamma > 1.
    """
    gamma = check_gamma(gamma)
    lg = math.log(gamma)
    if lg <= 0:
        raise ValueError("second-order term needs gamma > 1")
    return (math.log(d * (d - 1)) + 0.5 * (1 - rho * rho) + math.log(lg) - (1 - rho) * lg
            + float(log_phi_bar(lg)))


def variance_of_variance_diagnostic(model: SlnModel, gamma: float, k: int, tilt: RightTilt, n_k: int,
                                    stream: UniformStream | None = None) -> float:
    """Estimated Var(S^2) / Var(h_k)^2 from n_k replications of stratum k.

    A second-order efficient stratum keeps this ratio growing slowly in gamma.
    """
    if n_k < 100:
        raise ValueError("diagnostic needs n_k >= 100")
    r = estimate_hbar(model, gamma, k, tilt, n_k, stream)
    return ratio_var_of_var(r.acc)


def ratio_var_of_var(acc: LogAccumulator) -> float:
    """Var(S^2) / (S^2)^2 for an accumulated sample (scale free)."""
    if acc.m2 <= 0:
        return 0.0
    s2 = acc.m2 / (acc.count - 1)
    return sample_var_of_var(acc) / (s2 * s2)
