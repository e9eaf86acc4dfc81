"""One entry point per quantity, plus scikit-learn style wrappers.

:func:`estimate` dispatches (quantity, estimator, stream) to the functional
core and handles randomised QMC by repeating the run over independently
shifted Sobol streams. The estimator classes follow the ``fit`` /
``predict`` convention: ``fit`` takes a model, ``predict`` a vector of
thresholds, and the full :class:`LogEstimate` records land in ``results_``.
"""
from __future__ import annotations

import time
import warnings

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from . import baselines, lefttail, righttail
from .exceptions import ConfigError, ModelError
from .model import SlnModel, check_gamma, load_model, model_from_dict
from .optimize import asymptotic_right_tilt
from .rng import pseudo_stream, sobol_stream, split_seed
from .stats import LogAccumulator, LogEstimate

QUANTITIES = ("cdf", "pdf", "right-tail")
ESTIMATORS = {
    "cdf": ("new", "simple", "crude"),
    "pdf": ("new",),
    "right-tail": ("new", "crude", "var-boost", "ak", "isve", "gt"),
}


def stream_dim(model: SlnModel, estimator: str) -> int:
    """Uniforms consumed per replication."""
    if estimator == "ak":
        return max(model.d - 1, 1)
    if estimator == "isve":
        return model.d + 1
    return model.d


def gt_default_tilt(model: SlnModel, gamma: float) -> np.ndarray:
    """Asymptotic single tilt for the component with the largest sigma (lowest index on ties)."""
    return asymptotic_right_tilt(model, gamma, int(np.argmax(model.sigma)))


def _run_once(model, quantity, gamma, n, estimator, stream, theta, mu, threads, seed):
    if quantity == "cdf":
        if estimator == "new":
            return lefttail.estimate_cdf(model, gamma, n, stream, threads=threads)
        if estimator == "simple":
            return lefttail.estimate_cdf_simple(model, gamma, n, stream, threads=threads)
        return baselines.crude_mc(model, gamma, "left", n, stream, threads=threads)
    if quantity == "pdf":
        return lefttail.estimate_pdf(model, gamma, n, stream, threads=threads)
    if estimator == "new":
        return righttail.estimate_right_tail(model, gamma, n, stream, seed=seed, threads=threads)
    if estimator == "crude":
        return baselines.crude_mc(model, gamma, "right", n, stream, threads=threads)
    if estimator == "var-boost":
        if theta is None:
            raise ConfigError("the variance-boosted estimator needs --theta")
        return baselines.variance_boosted(model, gamma, theta, n, stream, threads=threads)
    if estimator == "ak":
        return baselines.asmussen_kroese(model, gamma, n, stream, threads=threads)
    if estimator == "isve":
        n1 = n // 2
        return baselines.isve(model, gamma, theta, n1, n - n1, stream, threads=threads)
    return baselines.gt_right_tail(model, gamma, mu, n, stream, threads=threads)


def estimate(model: SlnModel, quantity: str, gamma: float, n: int = 10 ** 6, estimator: str = "new",
             stream: str = "pseudo", shifts: int | None = None, seed: int = 0, theta: float | None = None,
             mu=None, threads: int = 1) -> LogEstimate:
    """Estimate ``quantity`` at ``gamma`` with the named estimator.

    With ``stream="sobol"`` the budget n is split over ``shifts`` (default
    100) randomly shifted Sobol point sets and the RE comes from the spread
    of the shift estimates.
    """
    if quantity not in QUANTITIES:
        raise ConfigError(f"unknown quantity {quantity!r}; choose from {', '.join(QUANTITIES)}")
    if estimator not in ESTIMATORS[quantity]:
        raise ConfigError(f"estimator {estimator!r} is not available for {quantity}; "
                          f"choose from {', '.join(ESTIMATORS[quantity])}")
    if stream not in ("pseudo", "sobol"):
        raise ConfigError(f"unknown stream {stream!r}")
    n = int(n)
    if n < 2:
        raise ConfigError("n must be at least 2")
    gamma = check_gamma(gamma)
    flags = []
    if estimator == "gt" and mu is None:
        mu = gt_default_tilt(model, gamma)
        flags.append("gt-tilt: asymptotic single tilt stand-in")
    dim = stream_dim(model, estimator)
    if stream == "pseudo":
        est = _run_once(model, quantity, gamma, n, estimator, pseudo_stream(seed, dim), theta, mu, threads, seed)
        est.flags = flags + est.flags
        est.extra.setdefault("seed", seed)
        return est
    R = 100 if shifts is None else int(shifts)
    if R < 2:
        raise ConfigError("RQMC needs at least 2 shifts")
    per = n // R
    if per < 2:
        raise ConfigError("n must be at least 2 x shifts")
    t0 = time.perf_counter()
    means = LogAccumulator()
    for r in range(R):
        sub_seed = split_seed(seed, r)
        one = _run_once(model, quantity, gamma, per, estimator, sobol_stream(dim, sub_seed), theta, mu,
                        threads, sub_seed)
        for f in one.flags:
            if f not in flags and f != "all-zero":
                flags.append(f)
        means.merge(LogAccumulator.from_batch([one.log_mean], [one.sign]))
    out = LogEstimate.from_accumulator(means, time.perf_counter() - t0, flags=flags, estimator=estimator,
                                       stream="sobol", shifts=R, points_per_shift=per, seed=seed)
    # RE above is sqrt(var of shift means / R) / mean; n reports total evaluations
    out.n = R * per
    return out


def _as_model(model) -> SlnModel:
    if isinstance(model, SlnModel):
        return model
    if isinstance(model, dict):
        return model_from_dict(model)
    if isinstance(model, str):
        return load_model(model)
    raise ModelError(f"cannot build a model from {type(model).__name__}")


def _check_gammas(gammas) -> np.ndarray:
    g = check_array(np.atleast_1d(np.asarray(gammas, dtype=float)), ensure_2d=False, dtype=float)
    g = g.reshape(-1)
    if np.any(g <= 0):
        raise ModelError("thresholds must be positive")
    return g


class _SlnEstimator(BaseEstimator):
    quantity = "cdf"

    def __init__(self, n=10 ** 6, estimator="new", stream="pseudo", shifts=None, seed=0, theta=None,
                 threads=1):
        self.n = n
        self.estimator = estimator
        self.stream = stream
        self.shifts = shifts
        self.seed = seed
        self.theta = theta
        self.threads = threads

    def fit(self, model, y=None):
        """Validate and store the model (an SlnModel, a model dict or a JSON path)."""
        if self.estimator not in ESTIMATORS[self.quantity]:
            raise ConfigError(f"estimator {self.estimator!r} not available for {self.quantity}")
        self.model_ = _as_model(model)
        self.n_features_in_ = self.model_.d
        return self

    def predict(self, gammas) -> np.ndarray:
        """Point estimates at each threshold (linear scale, may underflow to 0)."""
        check_is_fitted(self, "model_")
        g = _check_gammas(gammas)
        self.results_ = [
            estimate(self.model_, self.quantity, float(v), self.n, self.estimator, self.stream, self.shifts,
                     self.seed, self.theta, threads=self.threads)
            for v in g
        ]
        return np.array([r.estimate for r in self.results_])

    def predict_log10(self, gammas) -> np.ndarray:
        """log10 of the estimates; safe beyond double range."""
        self.predict(gammas)
        return np.array([r.log10_mean for r in self.results_])


class CdfEstimator(_SlnEstimator):
    """P(S <= gamma); estimator 'new' (tilted), 'simple' or 'crude'."""

    quantity = "cdf"


class PdfEstimator(_SlnEstimator):
    """Density of S at gamma by the push-out estimator."""

    quantity = "pdf"


class RightTailEstimator(_SlnEstimator):
    """P(S > gamma); estimator 'new', 'crude', 'var-boost', 'ak', 'isve' or 'gt'."""

    quantity = "right-tail"


class ConditionalSampler(BaseEstimator):
    """Exact sampler for X given S <= gamma.

    ``fit(model)`` solves the tilt and the rejection bound at ``gamma``;
    ``sample(n)`` returns an (n, d) array and records ``acceptance_rate_``;
    it warns and returns fewer rows if the proposal limit is reached first.
    """

    def __init__(self, gamma=1.0, seed=0):
        self.gamma = gamma
        self.seed = seed

    def fit(self, model, y=None):
        from .optimize import solve_left_tilt
        self.model_ = _as_model(model)
        check_gamma(self.gamma)
        self.tilt_ = solve_left_tilt(self.model_, self.gamma)
        self.n_features_in_ = self.model_.d
        return self

    def sample(self, n: int) -> np.ndarray:
        check_is_fitted(self, "model_")
        res = lefttail.sample_conditional(self.model_, self.gamma, int(n),
                                          pseudo_stream(self.seed, self.model_.d + 1), tilt=self.tilt_)
        self.result_ = res
        self.acceptance_rate_ = res.acceptance_rate
        self.flags_ = list(res.flags)
        if len(res.draws) < n:
            warnings.warn(f"only {len(res.draws)} of {n} draws accepted before the proposal limit "
                          f"(acceptance rate {res.acceptance_rate:.3g})", RuntimeWarning, stacklevel=2)
        return res.paths
