"""Exact rating model and MCMC inference.

The rating of a song with features ``x`` played ``t`` minutes after its
last spin is modelled as

    r ~ Normal(theta' x * (1 - exp(-t/s)), sigma^2)

with conjugate priors theta | sigma^2 ~ N(0, a0 sigma^2 I) and
tau = 1/sigma^2 ~ Gamma(f0, h0), and a Gamma(b0, c0) prior on the
recovery rate ``s``.  Conditioned on ``s`` the model is a Bayesian
linear regression, so inference alternates conjugate Gibbs draws for
theta and tau with a random-walk Metropolis step on log s.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from .history import HistoryRecord, design_arrays


@dataclass(frozen=True)
class ExactPriors:
    a0: float = 10.0  # prior scale of theta relative to sigma^2
    b0: float = 3.0  # Gamma shape for s
    c0: float = 1e-2  # Gamma rate for s
    f0: float = 1e-3  # Gamma shape for tau
    h0: float = 1e-3  # Gamma rate for tau

    def __post_init__(self) -> None:
        for name in ("a0", "b0", "c0", "f0", "h0"):
            if getattr(self, name) <= 0:
                raise ValueError(f"prior {name} must be positive")


@dataclass(frozen=True)
class McmcConfig:
    n_samples: int = 1000  # kept draws after burn-in
    burn_in: int = 500
    seed: int = 0
    proposal_scale: float = 0.5  # initial RW scale on log s; adapted in burn-in
    fixed_s: float | None = None  # clamp s (skip its update) when set


@dataclass(frozen=True)
class PosteriorSamples:
    """Kept MCMC draws: theta is (M, p); s and tau are (M,)."""

    theta: np.ndarray
    s: np.ndarray
    tau: np.ndarray
    diagnostics: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        m = self.theta.shape[0]
        if self.s.shape != (m,) or self.tau.shape != (m,):
            raise ValueError("sample arrays must share their first dimension")


def _sum_sq_resid(theta: np.ndarray, s: float, X: np.ndarray, r: np.ndarray, t_raw: np.ndarray) -> float:
    if len(r) == 0:
        return 0.0
    mean = (X @ theta) * (1.0 - np.exp(-t_raw / s))
    return float(np.sum((r - mean) ** 2))


def log_unnorm_posterior(
    theta: np.ndarray,
    s: float,
    tau: float,
    records: list[HistoryRecord] | tuple[HistoryRecord, ...],
    priors: ExactPriors = ExactPriors(),
) -> float:
    """Log joint density of (theta, s, tau) given the rating history.

    Includes the full prior and likelihood terms (normalizing constants
    that do not depend on the arguments are kept where cheap); returns
    -inf outside the support s > 0, tau > 0.
    """
    theta = np.asarray(theta, dtype=float)
    if s <= 0 or tau <= 0:
        return -np.inf
    X, _, r, t_raw = design_arrays(records)
    p = theta.shape[0]
    n = len(r)
    if n and X.shape[1] != p:
        raise ValueError(f"theta has dim {p} but records carry {X.shape[1]} features")
    lp = 0.5 * p * (np.log(tau) - np.log(2 * np.pi * priors.a0)) - tau * float(theta @ theta) / (
        2 * priors.a0
    )
    lp += (
        priors.b0 * np.log(priors.c0)
        - gammaln(priors.b0)
        + (priors.b0 - 1) * np.log(s)
        - priors.c0 * s
    )
    lp += (
        priors.f0 * np.log(priors.h0)
        - gammaln(priors.f0)
        + (priors.f0 - 1) * np.log(tau)
        - priors.h0 * tau
    )
    if n:
        lp += 0.5 * n * (np.log(tau) - np.log(2 * np.pi))
        lp -= 0.5 * tau * _sum_sq_resid(theta, s, X, r, t_raw)
    return float(lp)


def _log_s_conditional(
    s: float,
    theta: np.ndarray,
    tau: float,
    X: np.ndarray,
    r: np.ndarray,
    t_raw: np.ndarray,
    priors: ExactPriors,
) -> float:
    """Conditional log density of s up to a constant (support s > 0)."""
    if s <= 0:
        return -np.inf
    lp = (priors.b0 - 1) * np.log(s) - priors.c0 * s
    lp -= 0.5 * tau * _sum_sq_resid(theta, s, X, r, t_raw)
    return float(lp)


def mcmc_infer(
    records: list[HistoryRecord] | tuple[HistoryRecord, ...],
    priors: ExactPriors = ExactPriors(),
    config: McmcConfig = McmcConfig(),
    p: int | None = None,
) -> PosteriorSamples:
    """Metropolis-within-Gibbs sampler for (theta, s, tau).

    Per sweep: theta is drawn from its Gaussian conditional (design rows
    x_i * (1 - exp(-t_i/s))), tau from its Gamma conditional with rate
    h0 + SSR/2 + theta'theta/(2 a0), and log s by random-walk Metropolis
    whose proposal width adapts during burn-in toward a 30-50% acceptance
    rate (the extra +log s term is the change-of-variables Jacobian).
    With no records the chain samples the prior.
    """
    X, _, r, t_raw = design_arrays(records)
    n = len(r)
    if n:
        p = X.shape[1]
    elif p is None:
        raise ValueError("p is required when records are empty")
    rng = np.random.default_rng(config.seed)

    theta = np.zeros(p)
    s = config.fixed_s if config.fixed_s is not None else priors.b0 / priors.c0
    if s <= 0:
        raise ValueError("fixed_s must be positive")
    tau = 1.0
    scale = config.proposal_scale

    total = config.burn_in + config.n_samples
    keep_theta = np.empty((config.n_samples, p))
    keep_s = np.empty(config.n_samples)
    keep_tau = np.empty(config.n_samples)
    accepted = 0
    window_acc = 0
    window_n = 0

    eye_a0 = np.eye(p) / priors.a0
    for it in range(total):
        # theta | s, tau  (Gaussian; conditionally conjugate given s)
        if n:
            nov = 1.0 - np.exp(-t_raw / s)
            Z = X * nov[:, None]
            A = Z.T @ Z + eye_a0
            bvec = Z.T @ r
        else:
            A = eye_a0
            bvec = np.zeros(p)
        L = np.linalg.cholesky(A)
        m = np.linalg.solve(A, bvec)
        z = rng.standard_normal(p)
        theta = m + np.linalg.solve(L.T, z) / np.sqrt(tau)

        # tau | theta, s  (Gamma)
        ssr = _sum_sq_resid(theta, s, X, r, t_raw) if n else 0.0
        shape = priors.f0 + 0.5 * (n + p)
        rate = priors.h0 + 0.5 * ssr + float(theta @ theta) / (2 * priors.a0)
        tau = rng.gamma(shape, 1.0 / rate)

        # log s | theta, tau  (random-walk Metropolis)
        if config.fixed_s is None:
            u = np.log(s)
            u_prop = u + scale * rng.standard_normal()
            s_prop = np.exp(u_prop)
            log_acc = (
                _log_s_conditional(s_prop, theta, tau, X, r, t_raw, priors)
                + u_prop
                - _log_s_conditional(s, theta, tau, X, r, t_raw, priors)
                - u
            )
            if np.log(rng.uniform()) < log_acc:
                s = s_prop
                if it >= config.burn_in:
                    accepted += 1
                window_acc += 1
            window_n += 1
            if it < config.burn_in and window_n >= 50:
                rate_w = window_acc / window_n
                if rate_w > 0.5:
                    scale = min(scale * 1.4, 10.0)
                elif rate_w < 0.3:
                    scale = max(scale / 1.4, 1e-3)
                window_acc = 0
                window_n = 0

        if it >= config.burn_in:
            k = it - config.burn_in
            keep_theta[k] = theta
            keep_s[k] = s
            keep_tau[k] = tau

    diag = {
        "acceptance_rate": accepted / config.n_samples if config.fixed_s is None else 1.0,
        "proposal_scale": scale,
    }
    return PosteriorSamples(theta=keep_theta, s=keep_s, tau=keep_tau, diagnostics=diag)


def posterior_u_samples(samples: PosteriorSamples, x: np.ndarray, t_raw: float) -> np.ndarray:
    """Posterior draws of the expected rating theta'x * (1 - exp(-t/s))."""
    x = np.asarray(x, dtype=float)
    if x.shape != (samples.theta.shape[1],):
        raise ValueError(f"x has shape {x.shape}, expected ({samples.theta.shape[1]},)")
    if t_raw < 0 or not np.isfinite(t_raw):
        raise ValueError("t_raw must be finite and non-negative")
    return (samples.theta @ x) * (1.0 - np.exp(-t_raw / samples.s))


def posterior_u_matrix(samples: PosteriorSamples, X: np.ndarray, t_raws: np.ndarray) -> np.ndarray:
    """posterior_u_samples for many songs at once, shape (M, n_songs)."""
    X = np.asarray(X, dtype=float)
    t_raws = np.asarray(t_raws, dtype=float)
    if X.ndim != 2 or X.shape[1] != samples.theta.shape[1]:
        raise ValueError("X must be (n_songs, p) matching the samples")
    if t_raws.shape != (X.shape[0],):
        raise ValueError("t_raws must align with the rows of X")
    content = samples.theta @ X.T  # (M, n_songs)
    nov = 1.0 - np.exp(-t_raws[None, :] / samples.s[:, None])
    return content * nov
