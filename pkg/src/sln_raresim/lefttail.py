"""Left tail and body of the sum: cdf, density and exact conditional draws.

Every estimator here is a replication kernel over d uniforms (d + 1 for the
conditional sampler), so it runs unchanged on pseudorandom or shifted Sobol
streams.
"""
from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .exceptions import EmptyRegion, NoConvergence
from .model import SlnModel, check_gamma
from .optimize import LeftTilt, maximize_psi, solve_left_tilt
from .psi import pdf_factor, sample_sequential_batch
from .rng import UniformStream, exp1_from_uniform, pseudo_stream, run_kernel
from .stats import LogEstimate


@dataclass
class SequentialDraw:
    z: np.ndarray
    log_weight: float
    x: np.ndarray


@dataclass
class ConditionalDraw:
    x: np.ndarray
    attempts: int


@dataclass
class ConditionalSample:
    """Accepted draws of X given S <= gamma plus the rejection bookkeeping."""

    draws: list
    proposals: int
    c: float
    mu: np.ndarray
    flags: list = field(default_factory=list)

    @property
    def accepted(self) -> int:
        return len(self.draws)

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.proposals if self.proposals else math.nan

    @property
    def paths(self) -> np.ndarray:
        if not self.draws:
            return np.empty((0, len(self.mu)))
        return np.array([dr.x for dr in self.draws])


def sample_sequential(model: SlnModel, gamma: float, mu, u) -> SequentialDraw:
    """One draw from the sequential truncated-normal measure driven by ``u``."""
    gamma = check_gamma(gamma)
    if (math.log(gamma) - model.nu[0]) / model.L[0, 0] == -math.inf:
        raise EmptyRegion("first truncation point is -inf")
    z, lw, _ = sample_sequential_batch(model, gamma, mu, np.asarray(u, dtype=float)[None, :])
    return SequentialDraw(z=z[0], log_weight=float(lw[0]), x=np.exp(model.nu + model.L @ z[0]))


# ----------------------------------------------------------------- kernels


def cdf_kernel(model: SlnModel, gamma: float, mu):
    """Replication kernel u -> psi(Z; mu) (log of the cdf estimator)."""
    mu = np.asarray(mu, dtype=float)

    def kernel(u):
        return sample_sequential_batch(model, gamma, mu, u)[1], None

    return kernel


def simple_kernel(model: SlnModel, gamma: float):
    """prod_j Phi(alpha_j) with untilted sequential draws (mu = 0)."""
    return cdf_kernel(model, gamma, np.zeros(model.d))


def pdf_kernel(model: SlnModel, gamma: float, mu):
    """Push-out density kernel exp(psi) (-Z . L^{-1} 1) / gamma, signed."""
    mu = np.asarray(mu, dtype=float)
    b = pdf_factor(model)
    lg = math.log(gamma)

    def kernel(u):
        z, lw, _ = sample_sequential_batch(model, gamma, mu, u)
        t = -(z @ b)
        with np.errstate(divide="ignore"):
            lv = lw + np.log(np.abs(t)) - lg
        return lv, np.sign(t)

    return kernel


# --------------------------------------------------------------- estimators


def _stream(stream: UniformStream | None, dim: int) -> UniformStream:
    if stream is None:
        return pseudo_stream(0, dim)
    if stream.dim < dim:
        raise ValueError(f"stream supplies {stream.dim} uniforms per row, kernel needs {dim}")
    return stream


def _tilt_flags(tilt: LeftTilt) -> list:
    return [] if tilt.converged else [f"tilt-not-converged: {tilt.message}"]


def estimate_cdf_simple(model: SlnModel, gamma: float, n: int, stream: UniformStream | None = None,
                        threads: int = 1) -> LogEstimate:
    """Untilted estimator prod_j Phi(alpha_j(Z_<j)) of P(S <= gamma)."""
    t0 = time.perf_counter()
    gamma = check_gamma(gamma)
    acc = run_kernel(simple_kernel(model, gamma), _stream(stream, model.d), int(n), threads=threads)
    return LogEstimate.from_accumulator(acc, time.perf_counter() - t0, estimator="simple")


def estimate_cdf(model: SlnModel, gamma: float, n: int, stream: UniformStream | None = None,
                 tilt: LeftTilt | None = None, threads: int = 1) -> LogEstimate:
    """Tilted estimator exp(psi(Z; mu*)) of P(S <= gamma).

    The tilt is solved once (unless supplied) and its time is included in
    the reported wall time.
    """
    t0 = time.perf_counter()
    gamma = check_gamma(gamma)
    tilt = tilt or solve_left_tilt(model, gamma)
    acc = run_kernel(cdf_kernel(model, gamma, tilt.mu_star), _stream(stream, model.d), int(n), threads=threads)
    return LogEstimate.from_accumulator(acc, time.perf_counter() - t0, flags=_tilt_flags(tilt),
                                        estimator="new", mu=tilt.mu_star.tolist(), w=tilt.w_star.tolist())


def estimate_pdf(model: SlnModel, gamma: float, n: int, stream: UniformStream | None = None,
                 tilt: LeftTilt | None = None, threads: int = 1) -> LogEstimate:
    """Push-out estimator of the density of S at gamma, under the cdf tilt."""
    t0 = time.perf_counter()
    gamma = check_gamma(gamma)
    tilt = tilt or solve_left_tilt(model, gamma)
    acc = run_kernel(pdf_kernel(model, gamma, tilt.mu_star), _stream(stream, model.d), int(n), threads=threads)
    return LogEstimate.from_accumulator(acc, time.perf_counter() - t0, flags=_tilt_flags(tilt),
                                        estimator="new", mu=tilt.mu_star.tolist())


# ------------------------------------------------------ conditional sampler


def sample_conditional(model: SlnModel, gamma: float, n: int, stream: UniformStream | None = None,
                       tilt: LeftTilt | None = None, max_proposals: int | None = None,
                       block: int = 4096) -> ConditionalSample:
    """Exact draws from the law of X given S <= gamma by acceptance-rejection.

    Each proposal uses d + 1 uniforms: d drive the tilted sequential sampler
    and the last gives E ~ Exp(1); the proposal is kept when E > c - psi.
    Stops after ``n`` acceptances or ``max_proposals`` proposals (default
    1000 n + 10000).
    """
    gamma = check_gamma(gamma)
    d = model.d
    tilt = tilt or solve_left_tilt(model, gamma)
    mu = np.array(tilt.mu_star, dtype=float)
    flags = _tilt_flags(tilt)
    if mu[-1] > 0:
        # psi is unbounded above when the last tilt is positive; zero is still a valid proposal
        mu[-1] = 0.0
        flags.append("last tilt component clipped to 0")
    try:
        _, c, _ = maximize_psi(model, gamma, mu)
    except NoConvergence as exc:
        if exc.best is None:
            raise
        # an underestimated c would bias the sampler, so refuse to proceed
        raise NoConvergence(f"cannot bound psi for rejection sampling: {exc}", best=exc.best) from None
    stream = _stream(stream, d + 1)
    limit = max_proposals if max_proposals is not None else 1000 * int(n) + 10000
    draws: list = []
    proposals = 0
    last = 0
    while len(draws) < n and proposals < limit:
        m = min(block, limit - proposals)
        u = stream.uniforms(proposals, m)
        z, lw, _ = sample_sequential_batch(model, gamma, mu, u[:, :d])
        e = exp1_from_uniform(u[:, d])
        ok = e > c - lw
        for i in np.nonzero(ok)[0]:
            draws.append(ConditionalDraw(x=np.exp(model.nu + model.L @ z[i]), attempts=proposals + i + 1 - last))
            last = proposals + i + 1
            if len(draws) == n:
                proposals += i + 1
                break
        else:
            proposals += m
    if len(draws) < n:
        flags.append(f"proposal limit reached after {len(draws)} acceptances")
    return ConditionalSample(draws=draws, proposals=proposals, c=c, mu=mu, flags=flags)


def paths_csv(sample: ConditionalSample, gamma: float, comment: str = "") -> str:
    """One accepted path per row, acceptance statistics in leading comments."""
    buf = io.StringIO()
    buf.write(f"# acceptance_rate={sample.acceptance_rate:.6g} accepted={sample.accepted} "
              f"proposals={sample.proposals} gamma={gamma:.10g} c={sample.c:.10g}\n")
    if comment:
        buf.write(f"# {comment}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"x{j + 1}" for j in range(len(sample.mu))])
    for dr in sample.draws:
        w.writerow([f"{v:.10g}" for v in dr.x])
    return buf.getvalue()
