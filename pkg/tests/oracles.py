"""Independent reference implementations used to cross-check inference code.

Everything here is deliberately brute-force: dense grid quadrature for
low-dimensional posteriors, closed-form conjugate regression, and an
autocorrelation-based effective sample size.  None of it shares code with
the package under test.
"""

from __future__ import annotations

import numpy as np
from scipy.special import logsumexp


def trapezoid_weights(grid: np.ndarray) -> np.ndarray:
    """Quadrature cell widths for a (possibly non-uniform) 1-D grid.

    Summing f(grid) * weights approximates the integral of f.  Skipping
    these on a geometric grid silently reweights the density toward the
    fine end, which biases every posterior mean computed from it.
    """
    g = np.asarray(grid, dtype=float)
    w = np.empty_like(g)
    w[1:-1] = 0.5 * (g[2:] - g[:-2])
    w[0] = 0.5 * (g[1] - g[0])
    w[-1] = 0.5 * (g[-1] - g[-2])
    return w


def grid_posterior_product(
    z: np.ndarray,
    r: np.ndarray,
    theta_grid: np.ndarray,
    beta_grid: np.ndarray,
    mu_theta0: float,
    mu_beta0: float,
    d0: float,
    e0: float,
    a0: float,
    b0: float,
) -> dict:
    """Grid quadrature for the scalar product model r_i ~ N(theta*beta*z_i, 1/tau).

    Priors: theta | tau ~ N(mu_theta0, d0/tau), beta | tau ~ N(mu_beta0, e0/tau),
    tau ~ Gamma(a0, b0).  tau is integrated analytically, leaving a 2-D grid
    over (theta, beta) with log-weight -A * log B(theta, beta) where
    A = a0 + (N + 2) / 2.
    """
    z = np.asarray(z, dtype=float)
    r = np.asarray(r, dtype=float)
    n = len(r)
    th = np.asarray(theta_grid, dtype=float)
    be = np.asarray(beta_grid, dtype=float)
    A = a0 + 0.5 * (n + 2)

    tb = th[:, None] * be[None, :]
    ssr = np.zeros_like(tb)
    for zi, ri in zip(z, r):
        ssr += (ri - tb * zi) ** 2
    B = (
        b0
        + (th[:, None] - mu_theta0) ** 2 / (2.0 * d0)
        + (be[None, :] - mu_beta0) ** 2 / (2.0 * e0)
        + 0.5 * ssr
    )
    logw = -A * np.log(B)
    logw += np.log(trapezoid_weights(th))[:, None]
    logw += np.log(trapezoid_weights(be))[None, :]
    logw -= logsumexp(logw)
    w = np.exp(logw)

    edge = w[0, :].sum() + w[-1, :].sum() + w[:, 0].sum() + w[:, -1].sum()
    return {
        "mean_theta": float(np.sum(w * th[:, None])),
        "mean_beta": float(np.sum(w * be[None, :])),
        "edge_mass": float(edge),
    }


def grid_posterior_exact(
    x: np.ndarray,
    t: np.ndarray,
    r: np.ndarray,
    theta_grid: np.ndarray,
    s_grid: np.ndarray,
    a0: float,
    b0: float,
    c0: float,
    f0: float,
    h0: float,
) -> dict:
    """Grid quadrature for the scalar saturating-recency model.

    r_i ~ N(theta * x_i * (1 - exp(-t_i/s)), 1/tau) with
    theta | tau ~ N(0, a0/tau), s ~ Gamma(b0, c0), tau ~ Gamma(f0, h0).
    tau integrates out to log-weight (b0-1)*log s - c0*s - A*log B with
    A = f0 + (N + 1) / 2.
    """
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    r = np.asarray(r, dtype=float)
    n = len(r)
    th = np.asarray(theta_grid, dtype=float)
    sg = np.asarray(s_grid, dtype=float)
    A = f0 + 0.5 * (n + 1)

    ssr = np.zeros((len(th), len(sg)))
    for xi, ti, ri in zip(x, t, r):
        pred = th[:, None] * (xi * (1.0 - np.exp(-ti / sg)))[None, :]
        ssr += (ri - pred) ** 2
    B = h0 + th[:, None] ** 2 / (2.0 * a0) + 0.5 * ssr
    logw = (b0 - 1.0) * np.log(sg)[None, :] - c0 * sg[None, :] - A * np.log(B)
    logw += np.log(trapezoid_weights(th))[:, None]
    logw += np.log(trapezoid_weights(sg))[None, :]
    logw -= logsumexp(logw)
    w = np.exp(logw)

    edge = w[0, :].sum() + w[-1, :].sum() + w[:, 0].sum() + w[:, -1].sum()
    return {
        "mean_theta": float(np.sum(w * th[:, None])),
        "mean_s": float(np.sum(w * sg[None, :])),
        "edge_mass": float(edge),
        # posterior mean of U at a query point can reuse the same weights
        "weights": w,
        "theta_grid": th,
        "s_grid": sg,
    }


def grid_mean_u(oracle: dict, x: float, t_raw: float) -> float:
    """Posterior mean of theta * x * (1 - exp(-t/s)) under grid weights."""
    th = oracle["theta_grid"]
    sg = oracle["s_grid"]
    u = th[:, None] * (x * (1.0 - np.exp(-t_raw / sg)))[None, :]
    return float(np.sum(oracle["weights"] * u))


def conjugate_theta_mean(
    X: np.ndarray, t: np.ndarray, r: np.ndarray, s: float, a0: float
) -> np.ndarray:
    """Posterior mean of theta with the recency rate held fixed.

    With s known the model is Bayesian linear regression on the design
    Z_i = x_i * (1 - exp(-t_i/s)); the mean (Z'Z + I/a0)^{-1} Z'r does not
    depend on the noise precision because the prior scales with it.
    """
    Z = X * (1.0 - np.exp(-np.asarray(t) / s))[:, None]
    A = Z.T @ Z + np.eye(X.shape[1]) / a0
    return np.linalg.solve(A, Z.T @ r)


def effective_sample_size(chain: np.ndarray) -> float:
    """ESS from the initial positive sequence of autocorrelations."""
    x = np.asarray(chain, dtype=float)
    n = len(x)
    x = x - x.mean()
    var = float(x @ x) / n
    if var == 0.0:
        return float(n)
    acf = np.correlate(x, x, mode="full")[n - 1 :] / (n * var)
    # sum consecutive pairs until one goes negative
    total = 0.0
    k = 1
    while k + 1 < n:
        pair = acf[k] + acf[k + 1]
        if pair < 0:
            break
        total += pair
        k += 2
    ess = n / (1.0 + 2.0 * total)
    return float(min(max(ess, 1.0), n))


def mcse(chain: np.ndarray) -> float:
    """Monte Carlo standard error of the chain mean."""
    x = np.asarray(chain, dtype=float)
    return float(x.std(ddof=1) / np.sqrt(effective_sample_size(x)))
