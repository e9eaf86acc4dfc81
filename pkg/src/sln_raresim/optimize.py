"""Tilting-parameter programs used by the estimators.

* :func:`solve_left_tilt` - joint (w, mu) program for the cdf / left tail.
* :func:`solve_right_tilt` - per-stratum constrained program for the right tail.
* :func:`maximize_psi` - the bound c = max psi(z; mu) for exact rejection sampling.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import optimize as sopt
from scipy.special import logsumexp

from .exceptions import NoConvergence
from .model import SlnModel, check_gamma
from .psi import alphas, psi_grad, psi_value, sample_sequential_batch
from .specfun import log_phi_bar, mills_ratio


# --------------------------------------------------------------- left tail


@dataclass
class LeftTilt:
    w_star: np.ndarray
    mu_star: np.ndarray
    objective: float
    warm_objective: float = math.nan
    mu_residual: float = math.nan
    converged: bool = True
    message: str = ""


def mu_bar_warm_start(model: SlnModel, gamma: float, w) -> np.ndarray:
    """Closed-form minimiser of the quadratic surrogate of the left-tilt program.

    mu_bar = (ln gamma - w.nu + w.ln w) / (w' Sigma w) * L^T w
    """
    gamma = check_gamma(gamma)
    w = np.asarray(w, dtype=float)
    wlogw = float(np.sum(w[w > 0] * np.log(w[w > 0])))
    kappa = (math.log(gamma) - w @ model.nu + wlogw) / (w @ model.Sigma @ w)
    return kappa * (model.L.T @ w)


def left_objective(model: SlnModel, gamma: float, w, mu) -> float:
    """||mu||^2 + ln PhiBar((w.(nu - L mu) - ln gamma - w.ln w) / sqrt(w' Sigma w))."""
    w = np.asarray(w, dtype=float)
    mu = np.asarray(mu, dtype=float)
    pos = w > 0
    wlogw = float(np.sum(w[pos] * np.log(w[pos])))
    b = model.L.T @ w
    s = math.sqrt(b @ b)
    t = (w @ model.nu - b @ mu - math.log(gamma) - wlogw) / s
    return float(mu @ mu + log_phi_bar(t))


def _left_fg(x, model: SlnModel, log_gamma: float):
    """Objective and gradient in (eta, mu) with w = softmax(eta)."""
    d = model.d
    eta, mu = x[:d], x[d:]
    log_w = eta - logsumexp(eta)
    w = np.exp(log_w)
    b = model.L.T @ w
    s2 = b @ b
    s = math.sqrt(s2)
    N = w @ model.nu - b @ mu - log_gamma - w @ log_w
    t = N / s
    G = float(log_phi_bar(t))
    dG = -float(mills_ratio(-t))
    f = mu @ mu + G
    g_mu = 2.0 * mu - dG * b / s
    Sw = model.Sigma @ w
    g_w = dG * ((model.nu - model.L @ mu - log_w - 1.0) / s - N * Sw / (s2 * s))
    g_eta = w * (g_w - w @ g_w)
    return f, np.concatenate([g_eta, g_mu])


def solve_left_tilt(model: SlnModel, gamma: float, maxiter: int = 5000, tol: float = 1e-6) -> LeftTilt:
    """Minimise the left-tail tilting program over the simplex and R^d.

    The simplex is handled by a softmax parametrisation and the smooth joint
    problem is solved by L-BFGS, warm-started at uniform w and the closed-form
    mu_bar. Failure to meet ``tol`` on the mu-gradient is reported through
    ``converged=False`` rather than raised.
    """
    gamma = check_gamma(gamma)
    d = model.d
    log_gamma = math.log(gamma)
    w0 = np.full(d, 1.0 / d)
    mu0 = mu_bar_warm_start(model, gamma, w0)
    warm = left_objective(model, gamma, w0, mu0)
    x0 = np.concatenate([np.zeros(d), mu0])
    if d == 1:
        # the simplex is a single point: optimise mu only
        def fg(m):
            f, g = _left_fg(np.concatenate([[0.0], m]), model, log_gamma)
            return f, g[1:]
        res = sopt.minimize(fg, mu0, jac=True, method="BFGS", options={"gtol": 1e-12, "maxiter": maxiter})
        x = np.concatenate([[0.0], res.x])
    else:
        res = sopt.minimize(_left_fg, x0, args=(model, log_gamma), jac=True, method="L-BFGS-B",
                            options={"maxiter": maxiter, "maxcor": 30, "gtol": 1e-12, "ftol": 1e-15})
        x = res.x
        # BFGS polish sharpens the mu-block stationarity that L-BFGS leaves ~1e-6
        pol = sopt.minimize(_left_fg, x, args=(model, log_gamma), jac=True, method="BFGS",
                            options={"gtol": 1e-10, "maxiter": 200})
        if pol.fun <= res.fun:
            x = pol.x
    f, g = _left_fg(x, model, log_gamma)
    w = np.exp(x[:d] - logsumexp(x[:d]))
    mu = x[d:]
    if not f <= warm:
        w, mu, f = w0, mu0, warm
        g = _left_fg(np.concatenate([np.zeros(d), mu0]), model, log_gamma)[1]
    resid = float(np.max(np.abs(g[d:])))
    ok = resid <= tol
    return LeftTilt(w_star=w, mu_star=mu, objective=float(f), warm_objective=warm,
                    mu_residual=resid, converged=ok,
                    message="" if ok else f"mu-gradient {resid:.2e} above {tol:.0e}")


# -------------------------------------------------------------- right tail


@dataclass
class RightTilt:
    k: int
    mu: np.ndarray
    g1_slack: float
    g2_slack: float
    objective: float = math.nan
    kkt_residual: float = math.nan
    converged: bool = True
    fallback: bool = False
    message: str = ""

    @property
    def eta(self):
        """Whitened tilt L^{-1} mu (set by the solver)."""
        return self._eta

    @eta.setter
    def eta(self, value):
        self._eta = value


def asymptotic_right_tilt(model: SlnModel, gamma: float, k: int) -> np.ndarray:
    """Large-gamma solution ((ln gamma - nu_k) / sigma_k^2) Sigma e_k (k is 0-based)."""
    gamma = check_gamma(gamma)
    s2 = model.Sigma[k, k]
    return (math.log(gamma) - model.nu[k]) / s2 * model.Sigma[:, k]


def right_constraints(model: SlnModel, gamma: float, k: int, mu) -> tuple[float, float]:
    """Exact (g1, g2) of the right-tilt program, g1 divided by gamma."""
    mu = np.asarray(mu, dtype=float)
    half = 0.5 * np.diag(model.Sigma)
    level = mu + model.nu + half
    others = np.delete(level, k)
    g1 = math.exp(mu[k] + model.nu[k]) + float(np.sum(np.exp(others)))
    g1 = g1 / gamma - 1.0
    g2 = level[k] - float(np.max(others)) if others.size else math.inf
    return g1, g2


def _right_setup(model: SlnModel, gamma: float, k: int):
    d = model.d
    half = 0.5 * np.diag(model.Sigma)
    off = model.nu + half
    L = model.L
    log_gamma = math.log(gamma)

    # g1 >= 0 is imposed in the equivalent log form ln(g1 + gamma) - ln gamma >= 0,
    # whose gradient (a softmax) stays bounded far from the feasible set
    def _levels(eta):
        e = off + L @ eta
        e[k] -= half[k]
        return e

    def g1(eta):
        return float(logsumexp(_levels(eta))) - log_gamma

    def g1_jac(eta):
        e = _levels(eta)
        return np.exp(e - logsumexp(e)) @ L

    others = [j for j in range(d) if j != k]
    A = np.zeros((len(others), d))
    for r, j in enumerate(others):
        A[r, k] = 1.0
        A[r, j] = -1.0
    AL = A @ L
    bvec = A @ off
    return g1, g1_jac, AL, bvec


def _kkt_residual(eta, g1_val, g1_grad, lin_val, AL, tol_active=1e-7) -> float:
    grads = []
    if g1_val <= tol_active:
        grads.append(g1_grad)
    for r in np.nonzero(lin_val <= tol_active)[0]:
        grads.append(AL[r])
    scale = max(float(np.linalg.norm(eta)), 1.0)
    if not grads:
        return float(np.linalg.norm(eta)) / scale
    G = np.array(grads).T
    lam, rnorm = sopt.nnls(G, eta)
    return float(rnorm) / scale


def solve_right_tilt(model: SlnModel, gamma: float, k: int, maxiter: int = 500) -> RightTilt:
    """Solve min 1/2 mu' Sigma^{-1} mu s.t. g1(mu) >= 0, g2(mu) >= 0 for stratum k (0-based).

    Works in whitened coordinates mu = L eta. The max inside g2 is replaced by
    the equivalent d - 1 linear constraints, so SLSQP sees a smooth problem.
    Starts from the asymptotic tilt and from zero; keeps the best feasible
    result. Falls back to the asymptotic tilt (flagged) if neither converges.
    """
    gamma = check_gamma(gamma)
    d = model.d
    L = model.L
    g1, g1_jac, AL, bvec = _right_setup(model, gamma, k)
    cons = [{"type": "ineq", "fun": g1, "jac": g1_jac}]
    if d > 1:
        cons.append({"type": "ineq", "fun": lambda e: AL @ e + bvec, "jac": lambda e: AL})
    mu_as = asymptotic_right_tilt(model, gamma, k)
    starts = [model.solve_L(mu_as), np.zeros(d)]
    best = None
    for eta0 in starts:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            res = sopt.minimize(lambda e: (0.5 * e @ e, e), eta0, jac=True, method="SLSQP",
                                constraints=cons, options={"maxiter": maxiter, "ftol": 1e-15})
        eta = res.x
        s1 = g1(eta)
        lin = AL @ eta + bvec if d > 1 else np.array([])
        feas = s1 >= -1e-8 and (lin.size == 0 or lin.min() >= -1e-8)
        if not feas:
            continue
        obj = 0.5 * eta @ eta
        if best is None or obj < best[1] - 1e-14:
            best = (eta, obj, s1, lin)
    fallback = best is None
    if fallback:
        eta = model.solve_L(mu_as)
        best = (eta, 0.5 * eta @ eta, g1(eta), AL @ eta + bvec if d > 1 else np.array([]))
    eta, obj, s1, lin = best
    mu = L @ eta
    g1v, g2v = right_constraints(model, gamma, k, mu)
    kkt = _kkt_residual(eta, s1, g1_jac(eta), lin, AL) if d > 1 else _kkt_residual(eta, s1, g1_jac(eta), lin, np.zeros((0, 1)))
    ok = (not fallback) and kkt <= 1e-6
    tilt = RightTilt(k=k, mu=mu, g1_slack=g1v, g2_slack=g2v, objective=float(obj), kkt_residual=kkt,
                     converged=ok, fallback=fallback,
                     message="" if ok else ("fell back to asymptotic tilt" if fallback else f"KKT residual {kkt:.1e}"))
    tilt.eta = eta
    return tilt


# --------------------------------------------------------- psi maximiser


def _reduced(model: SlnModel, gamma: float, mu, zr):
    """psi and its gradient with the last coordinate pinned to alpha_d(z_<d)."""
    d = model.d
    zr = np.atleast_2d(zr)
    n = zr.shape[0]
    # alpha_d depends only on z_<d, so any placeholder works for the last column
    z = np.concatenate([zr, np.zeros((n, 1))], axis=1)
    a, x, gap = alphas(model, gamma, z)
    z[:, -1] = a[:, -1]
    ok = np.isfinite(a[:, -1])
    if not ok.all():
        return np.full(n, -np.inf), None, z
    val = psi_value(model, gamma, mu, z)
    g = psi_grad(model, gamma, mu, z)
    a, x, gap = alphas(model, gamma, z)
    L = model.L
    # d alpha_d / d z_i = [-(sum_{i<=k<d} x_k L_ki) / gap_d - L_di] / L_dd
    dad = (-(x[:, : d - 1] @ L[: d - 1, : d - 1]) / gap[:, [-1]] - L[-1, : d - 1]) / L[-1, -1]
    gr = g[:, : d - 1] + g[:, [-1]] * dad
    return val, gr, z


def maximize_psi(model: SlnModel, gamma: float, mu, tol: float = 1e-8, maxiter: int = 200):
    """c = max of psi(z; mu) over the support {sum_k exp(nu_k + (L z)_k) <= gamma}.

    Requires mu_d <= 0 (otherwise psi is unbounded on the support). The last
    coordinate sits on the boundary z_d = alpha_d; the remaining d - 1 are
    found by damped Newton ascent on the concave reduced function, using a
    finite-difference Hessian of the analytic gradient.

    Returns (z_max, c, gradient_norm).
    """
    gamma = check_gamma(gamma)
    mu = np.asarray(mu, dtype=float)
    d = model.d
    if mu[-1] > 0:
        raise NoConvergence("psi is unbounded above when the last tilt component is positive")
    if d == 1:
        a = math.log(gamma) - model.nu[0]
        a /= model.L[0, 0]
        z = np.array([a])
        return z, float(psi_value(model, gamma, mu, z[None])[0]), 0.0
    # feasible start: the median path of the sampler
    z0, _, _ = sample_sequential_batch(model, gamma, mu, np.full((1, d), 0.5))
    zr = z0[0, : d - 1].copy()
    f, g, _ = _reduced(model, gamma, mu, zr)
    f, g = f[0], g[0]
    gnorm = float(np.linalg.norm(g))
    for it in range(maxiter):
        if gnorm <= tol:
            break
        h = 1e-6 * max(1.0, float(np.max(np.abs(zr))))
        pts = np.vstack([zr + h * np.eye(d - 1), zr - h * np.eye(d - 1)])
        vals, grads, _ = _reduced(model, gamma, mu, pts)
        if grads is None:
            H = -np.eye(d - 1)
        else:
            H = (grads[: d - 1] - grads[d - 1:]) / (2 * h)
            H = 0.5 * (H + H.T)
        try:
            step = np.linalg.solve(H, -g)
            if step @ g <= 0:
                raise np.linalg.LinAlgError
        except np.linalg.LinAlgError:
            step = g / max(gnorm, 1.0)
        t = 1.0
        while t > 1e-12:
            cand = zr + t * step
            fc, gc, _ = _reduced(model, gamma, mu, cand)
            if np.isfinite(fc[0]) and fc[0] >= f - 1e-14 * abs(f):
                break
            t *= 0.5
        else:
            break
        zr, f, g = cand, fc[0], gc[0]
        gnorm = float(np.linalg.norm(g))
    _, _, z = _reduced(model, gamma, mu, zr)
    if gnorm > tol:
        raise NoConvergence(f"psi maximisation stopped with gradient norm {gnorm:.2e}", best=(z[0], float(f)))
    return z[0], float(f), gnorm
