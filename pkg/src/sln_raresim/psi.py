"""Sequential truncated-normal sampling and the log-likelihood ratio psi.

For the event {sum_k exp(nu_k + (L z)_k) <= gamma} the coordinates of z are
drawn one at a time, Z_j ~ TN_(-inf, alpha_j)(mu_j, 1), where alpha_j is the
largest value that keeps the partial sum below gamma. The log of dP/dP_mu is

    psi(z; mu) = sum_j [mu_j^2 / 2 - z_j mu_j + ln Phi(alpha_j(z) - mu_j)]

All routines work on row batches z of shape (n, d).
"""
from __future__ import annotations

import numpy as np
from scipy import special

from .model import SlnModel
from .specfun import mills_ratio


def sample_sequential_batch(model: SlnModel, gamma: float, mu, u):
    """Map a block of uniforms (n, d) to draws z and log weights psi(z; mu).

    Row i is a deterministic, smooth, coordinatewise increasing function of
    u[i]. Returns (z, log_weight, alpha).
    """
    u = np.atleast_2d(np.asarray(u, dtype=float))
    n, d = u.shape
    if d < model.d:
        raise ValueError(f"need {model.d} uniforms per row, got {d}")
    L, nu = model.L, model.nu
    mu = np.asarray(mu, dtype=float)
    log_gamma = np.log(gamma)
    z = np.empty((n, model.d))
    alpha = np.empty((n, model.d))
    logw = np.zeros(n)
    partial = np.zeros(n)
    dead = np.zeros(n, dtype=bool)
    log_u = np.log(u[:, : model.d])
    for j in range(model.d):
        lin = z[:, :j] @ L[j, :j] if j else np.zeros(n)
        gap = gamma - partial
        if j == 0:
            log_gap = np.full(n, log_gamma)
        else:
            bad = gap <= 0.0
            if bad.any():
                # a previous draw rounded onto the boundary; row has zero weight
                dead |= bad
                gap = np.where(bad, gamma, gap)
            log_gap = np.log(gap)
        a = (log_gap - nu[j] - lin) / L[j, j]
        shifted = a - mu[j]
        log_cdf = special.log_ndtr(shifted)
        zj = mu[j] + special.ndtri_exp(log_u[:, j] + log_cdf)
        np.minimum(zj, a, out=zj)
        z[:, j] = zj
        alpha[:, j] = a
        logw += 0.5 * mu[j] * mu[j] - zj * mu[j] + log_cdf
        partial = partial + np.exp(nu[j] + lin + L[j, j] * zj)
    if dead.any():
        logw[dead] = -np.inf
    return z, logw, alpha


def alphas(model: SlnModel, gamma: float, z):
    """alpha_j(z_1..z_{j-1}) for a batch of complete z rows.

    Entries are -inf where the earlier coordinates already exhaust gamma.
    Also returns the per-coordinate values x = exp(nu + L z) and the gaps
    gamma - sum_{k<j} x_k.
    """
    z = np.atleast_2d(np.asarray(z, dtype=float))
    L = model.L
    y = model.nu + z @ L.T
    x = np.exp(y)
    partial = np.cumsum(x, axis=1) - x
    gap = gamma - partial
    with np.errstate(divide="ignore", invalid="ignore"):
        log_gap = np.where(gap > 0, np.log(np.where(gap > 0, gap, 1.0)), -np.inf)
    diagL = np.diag(L)
    a = (log_gap - (y - diagL * z)) / diagL
    return a, x, gap


def log_psi(model: SlnModel, gamma: float, mu, z):
    """psi(z; mu) for rows of z; -inf outside the support {sum x <= gamma}."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    mu = np.asarray(mu, dtype=float)
    a, x, _ = alphas(model, gamma, z)
    inside = np.all(z <= a, axis=1) & (x.sum(axis=1) <= gamma * (1 + 1e-12))
    with np.errstate(invalid="ignore"):
        val = 0.5 * mu @ mu - z @ mu + np.sum(special.log_ndtr(a - mu), axis=1)
    return np.where(inside, val, -np.inf)


def psi_value(model: SlnModel, gamma: float, mu, z):
    """psi without the support check (finite wherever all alpha_j are finite)."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    mu = np.asarray(mu, dtype=float)
    a, _, _ = alphas(model, gamma, z)
    return 0.5 * mu @ mu - z @ mu + np.sum(special.log_ndtr(a - mu), axis=1)


def psi_grad(model: SlnModel, gamma: float, mu, z):
    """Analytic gradient of psi(z; mu) with respect to z, row by row.

    With c_j = m_j / L_jj (m_j the Mills ratio at alpha_j - mu_j) and
    D_k = sum_{j>k} c_j / gap_j the gradient is

        -mu - L^T (x * D) - (L^T c - diag(L) c)
    """
    z = np.atleast_2d(np.asarray(z, dtype=float))
    mu = np.asarray(mu, dtype=float)
    L = model.L
    a, x, gap = alphas(model, gamma, z)
    c = mills_ratio(a - mu) / np.diag(L)
    r = c / gap
    # D_k = sum_{j > k} r_j
    D = np.cumsum(r[:, ::-1], axis=1)[:, ::-1] - r
    A = -(x * D) @ L
    B = -(c @ L - c * np.diag(L))
    return -mu + A + B


def pdf_factor(model: SlnModel):
    """L^{-1} 1, the direction that turns psi weights into density weights."""
    return model.solve_L(np.ones(model.d))
