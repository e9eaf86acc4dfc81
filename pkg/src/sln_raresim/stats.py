"""Scaled moment accumulation and Monte Carlo error reporting.

Replication values routinely sit below 1e-300, so every batch is stored as
``exp(log_scale) * (mean, M2, M3, M4)`` where the bracketed central-moment
sums are ordinary doubles of order one. Batches are merged with the
pairwise update formulas of Chan et al. / Pebay, which keeps the variance
accurate even when the relative spread is 1e-10 (raw power sums would lose
it to cancellation).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logsumexp

from .exceptions import Insufficient

SCHEMA = "sln-raresim/1"


@dataclass
class LogAccumulator:
    """Running count, mean and central-moment sums of replication values.

    Values are passed as (log|v|, sign) pairs. ``mean``, ``m2``, ``m3``,
    ``m4`` are in units of exp(log_scale), exp(2 log_scale), ...
    """

    count: int = 0
    log_scale: float = -math.inf
    mean: float = 0.0
    m2: float = 0.0
    m3: float = 0.0
    m4: float = 0.0

    def add(self, log_values, signs=None) -> "LogAccumulator":
        """Accumulate a batch; returns self."""
        self.merge(LogAccumulator.from_batch(log_values, signs))
        return self

    @classmethod
    def from_batch(cls, log_values, signs=None) -> "LogAccumulator":
        lv = np.asarray(log_values, dtype=float).reshape(-1)
        n = lv.size
        if n == 0:
            return cls()
        top = np.max(lv)
        if top == -math.inf:
            return cls(count=n)
        v = np.exp(lv - top)
        if signs is not None:
            v = v * np.asarray(signs, dtype=float).reshape(-1)
        mean = float(np.mean(v))
        c = v - mean
        c2 = c * c
        return cls(
            count=n,
            log_scale=float(top),
            mean=mean,
            m2=float(np.sum(c2)),
            m3=float(np.sum(c2 * c)),
            m4=float(np.sum(c2 * c2)),
        )

    def _rescaled(self, log_scale: float) -> "LogAccumulator":
        if self.log_scale == log_scale:
            return self
        if self.log_scale == -math.inf:
            return replace(self, log_scale=log_scale)
        f = math.exp(self.log_scale - log_scale)
        f2 = f * f
        return replace(
            self, log_scale=log_scale, mean=self.mean * f, m2=self.m2 * f2,
            m3=self.m3 * f2 * f, m4=self.m4 * f2 * f2,
        )

    def merge(self, other: "LogAccumulator") -> "LogAccumulator":
        """Fold ``other`` into self (in place) and return self."""
        if other.count == 0:
            return self
        if self.count == 0:
            self.__dict__.update(other.__dict__)
            return self
        scale = max(self.log_scale, other.log_scale)
        a, b = self._rescaled(scale), other._rescaled(scale)
        na, nb = a.count, b.count
        n = na + nb
        delta = b.mean - a.mean
        dn = delta / n
        mean = a.mean + nb * dn
        m2 = a.m2 + b.m2 + delta * dn * na * nb
        m3 = (a.m3 + b.m3 + delta * dn * dn * na * nb * (na - nb)
              + 3.0 * dn * (na * b.m2 - nb * a.m2))
        m4 = (a.m4 + b.m4
              + delta * dn * dn * dn * na * nb * (na * na - na * nb + nb * nb)
              + 6.0 * dn * dn * (na * na * b.m2 + nb * nb * a.m2)
              + 4.0 * dn * (na * b.m3 - nb * a.m3))
        self.count, self.log_scale = n, scale
        self.mean, self.m2, self.m3, self.m4 = mean, m2, m3, m4
        return self

    @property
    def sign(self) -> float:
        return float(np.sign(self.mean))

    @property
    def log_abs_mean(self) -> float:
        if self.mean == 0.0:
            return -math.inf
        return self.log_scale + math.log(abs(self.mean))

    @property
    def log_var(self) -> float:
        """ln of the unbiased (n - 1 divisor) sample variance."""
        if self.count < 2:
            raise Insufficient("variance needs at least 2 values")
        if self.m2 <= 0.0:
            return -math.inf
        return 2.0 * self.log_scale + math.log(self.m2 / (self.count - 1))

    def central_moment(self, k: int) -> float:
        """k-th sample central moment (divisor n), in units of exp(k log_scale)."""
        return {2: self.m2, 3: self.m3, 4: self.m4}[k] / self.count


def log_mean_var(acc: LogAccumulator) -> tuple[float, float]:
    """(ln mean, ln unbiased variance) of a nonnegative sample."""
    if acc.count < 1:
        raise Insufficient("empty accumulator")
    return acc.log_abs_mean, acc.log_var


def relative_error(log_mean: float, log_var: float, n: int) -> float:
    """RE in percent: 100 sqrt(Var / n) / mean.

    An all-zero sample (log_mean = -inf) is reported as 100 %.
    """
    if n < 2:
        raise Insufficient("relative error needs n >= 2")
    if log_mean == -math.inf:
        return 100.0
    if log_var == -math.inf:
        return 0.0
    return 100.0 * math.exp(0.5 * log_var - 0.5 * math.log(n) - log_mean)


def wnrv(re_percent: float, wall_seconds: float) -> float:
    """Work-normalised relative variance: RE^2 (as a fraction) times seconds."""
    return (re_percent / 100.0) ** 2 * wall_seconds


def sample_var_of_var(acc: LogAccumulator) -> float:
    """Plug-in estimate of Var(S^2) from the sample central moments.

    Var(S^2) = mu4 / n - sigma^4 (n - 3) / (n (n - 1)); returned in units of
    exp(4 log_scale) (use :func:`log_sample_var_of_var` for the absolute
    value).
    """
    n = acc.count
    if n < 4:
        raise Insufficient("variance of the sample variance needs n >= 4")
    m2 = acc.central_moment(2)
    m4 = acc.central_moment(4)
    return max(m4 / n - m2 * m2 * (n - 3) / (n * (n - 1)), 0.0)


def log_sample_var_of_var(acc: LogAccumulator) -> float:
    v = sample_var_of_var(acc)
    return 4.0 * acc.log_scale + math.log(v) if v > 0 else -math.inf


@dataclass
class LogEstimate:
    """A Monte Carlo result held in log space.

    ``log_mean`` is ln|estimate| and ``sign`` its sign (pdf estimates can in
    principle be negative). ``re_percent`` is the relative error of the
    reported mean and ``wnrv`` the work-normalised relative variance.
    """

    log_mean: float
    re_percent: float
    n: int
    wall_seconds: float = 0.0
    sign: float = 1.0
    log_var: float = -math.inf
    flags: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @property
    def wnrv(self) -> float:
        return wnrv(self.re_percent, self.wall_seconds)

    @property
    def estimate(self) -> float:
        """Linear-space value (underflows to 0 below ~1e-308)."""
        if self.log_mean == -math.inf:
            return 0.0
        return self.sign * math.exp(self.log_mean)

    @property
    def log10_mean(self) -> float:
        return self.log_mean / math.log(10.0)

    @property
    def std_error(self) -> float:
        """Absolute standard error of the estimate (linear space).

        Taken from the RE so that it stays right for RQMC results, whose
        ``n`` counts all evaluations rather than the independent shifts.
        """
        return self.re_percent / 100.0 * abs(self.estimate)

    def sci(self, digits: int = 3) -> str:
        return format_log10(self.log10_mean, self.sign, digits)

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "estimate": self.sci(),
            "log10": self.log10_mean,
            "sign": self.sign,
            "re_percent": self.re_percent,
            "wnrv": self.wnrv,
            "n": self.n,
            "seconds": round(self.wall_seconds, 3),
            "flags": list(self.flags),
            **self.extra,
        }

    @classmethod
    def from_accumulator(cls, acc: LogAccumulator, wall_seconds=0.0, flags=(), **extra) -> "LogEstimate":
        n = acc.count
        lm = acc.log_abs_mean
        lv = acc.log_var if n >= 2 else -math.inf
        flags = list(flags)
        if lm == -math.inf:
            flags.append("all-zero")
        re = relative_error(lm, lv, n) if n >= 2 else 100.0
        return cls(log_mean=lm, re_percent=re, n=n, wall_seconds=wall_seconds,
                   sign=acc.sign if acc.mean != 0 else 1.0, log_var=lv, flags=flags, extra=dict(extra))


def format_log10(log10_value: float, sign: float = 1.0, digits: int = 3) -> str:
    """Scientific notation from a log10 magnitude; works beyond double range."""
    if log10_value == -math.inf:
        return "0"
    e = math.floor(log10_value)
    m = 10.0 ** (log10_value - e)
    mant = f"{m:.{digits - 1}f}"
    if float(mant) >= 10.0:
        e += 1
        mant = f"{m / 10:.{digits - 1}f}"
    return f"{'-' if sign < 0 else ''}{mant}e{e:+03d}"


def combine_independent(log_means, log_var_means) -> tuple[float, float]:
    """ln of (sum of means, sum of variances of the means) for independent parts.

    Both inputs are logs; -inf entries are empty parts.
    """
    lm = np.asarray(log_means, dtype=float)
    lv = np.asarray(log_var_means, dtype=float)
    tot_m = float(logsumexp(lm)) if np.any(np.isfinite(lm)) else -math.inf
    tot_v = float(logsumexp(lv)) if np.any(np.isfinite(lv)) else -math.inf
    return tot_m, tot_v


def estimate_from_parts(log_mean: float, log_var_mean: float, n: int, wall_seconds: float = 0.0,
                        flags=(), **extra) -> LogEstimate:
    """LogEstimate for a sum of independent sample means with known total variance."""
    flags = list(flags)
    if log_mean == -math.inf:
        re = 100.0
        flags.append("all-zero")
    elif log_var_mean == -math.inf:
        re = 0.0
    else:
        re = 100.0 * math.exp(0.5 * log_var_mean - log_mean)
    lv = log_var_mean + math.log(n) if log_var_mean > -math.inf else -math.inf
    return LogEstimate(log_mean=log_mean, re_percent=re, n=int(n), wall_seconds=wall_seconds,
                       log_var=lv, flags=flags, extra=dict(extra))
