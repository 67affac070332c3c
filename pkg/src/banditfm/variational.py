"""Approximate rating model: conjugate factorization and variational fit.

The exponential novelty term is replaced by a linear form in a hinge
time basis, so the expected rating becomes a product of linear factors

    r ~ Normal(theta' x * beta' t, sigma^2)

with Gaussian priors theta | tau ~ N(mu_theta0, D0 / tau),
beta | tau ~ N(mu_beta0, E0 / tau) and tau = 1/sigma^2 ~ Gamma(a0, b0).
A mean-field posterior q(theta) q(beta) q(tau) is fit by coordinate
ascent; every update is available in closed form, and the evidence
lower bound is evaluated exactly, so each sweep must not decrease it.

An optional third linear factor gamma' d (extra per-song descriptors)
follows the same pattern.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import digamma, gammaln

from .history import HistoryRecord, design_arrays

LOG_2PI = float(np.log(2.0 * np.pi))
EPS = float(np.finfo(float).eps)


def _inv_and_logdet(A: np.ndarray) -> tuple[np.ndarray, float, float]:
    """Inverse, log-determinant and a condition estimate of a symmetric PD matrix.

    The matrix is Jacobi-equilibrated (scaled to unit diagonal) before the
    Cholesky factorization: hinge-basis precision matrices mix columns
    spanning ten orders of magnitude, and factoring the raw matrix loses
    most of the mantissa.  The condition number of the equilibrated matrix
    is estimated from the factor's diagonal spread (a cheap lower bound,
    good enough to size numerical noise floors).
    """
    A = 0.5 * (A + A.T)
    dg = np.diag(A)
    if np.any(dg <= 0) or not np.all(np.isfinite(dg)):
        raise np.linalg.LinAlgError("matrix not positive definite: bad diagonal")
    d = np.sqrt(dg)
    As = A / d[:, None] / d[None, :]
    try:
        L = np.linalg.cholesky(As)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"matrix not positive definite: {exc}") from None
    Linv = solve_triangular(L, np.eye(A.shape[0]), lower=True)
    inv = (Linv.T @ Linv) / d[:, None] / d[None, :]
    logdet = 2.0 * float(np.sum(np.log(np.diag(L)))) + 2.0 * float(np.sum(np.log(d)))
    dl = np.diag(L)
    kappa = float((dl.max() / dl.min()) ** 2)
    return 0.5 * (inv + inv.T), logdet, kappa


def _refined_mean(Lam: np.ndarray, cov: np.ndarray, eta: np.ndarray) -> np.ndarray:
    """Solve Lam @ mean = eta given cov ~ Lam^-1, plus one refinement step.

    A single residual correction recovers most of the digits the factored
    solve loses when Lam is nearly singular along hinge directions.
    """
    mean = cov @ eta
    return mean + cov @ (eta - Lam @ mean)


def _quad_forms(F: np.ndarray, cov: np.ndarray) -> np.ndarray:
    """Per-row quadratic forms diag(F cov F')."""
    return np.einsum("ij,ij->i", F @ cov, F)


def _best_rescale(
    mean_a: np.ndarray,
    cov_a: np.ndarray,
    P0inv_a: np.ndarray,
    mu0_a: np.ndarray,
    dim_a: int,
    mean_b: np.ndarray,
    cov_b: np.ndarray,
    P0inv_b: np.ndarray,
    mu0_b: np.ndarray,
    dim_b: int,
    e_tau: float,
) -> float:
    """Bound-optimal c for the exact invariance (a, b) -> (c a, b / c).

    Opposite rescalings of two product factors leave every likelihood
    moment unchanged, so blockwise ascent crawls along that ridge: each
    sweep shrinks the residual by only a couple of percent once the fit
    is near the ridge.  Maximizing the bound over c directly is another
    exact coordinate step (the factors stay Gaussian), and its
    stationarity condition is a quartic in c, solved here by companion
    eigenvalues.  Returns 1.0 whenever no admissible root beats it.
    """
    Pa_m = P0inv_a @ mean_a
    A = float(mean_a @ Pa_m + np.sum(P0inv_a * cov_a))
    G = float(mu0_a @ Pa_m)
    Pb_m = P0inv_b @ mean_b
    B = float(mean_b @ Pb_m + np.sum(P0inv_b * cov_b))
    H = float(mu0_b @ Pb_m)
    dd = float(dim_a - dim_b)
    # c^3 * d(bound)/dc = -tau (A c^4 - G c^3 + H c - B) + dd c^2
    coefs = np.array([-e_tau * A, e_tau * G, dd, -e_tau * H, e_tau * B])
    scale = float(np.max(np.abs(coefs)))
    if not np.isfinite(scale) or scale == 0.0:
        return 1.0

    def gain(c: float) -> float:
        return (
            -0.5 * e_tau * (A * c * c - 2.0 * G * c + (B - 2.0 * H * c) / (c * c))
            + dd * np.log(c)
        )

    best, best_gain = 1.0, gain(1.0)
    for z in np.roots(coefs / scale):
        if abs(z.imag) > 1e-9 * max(1.0, abs(z.real)):
            continue
        c = float(z.real)
        if not 1e-8 < c < 1e8:
            continue
        g = gain(c)
        if np.isfinite(g) and g > best_gain:
            best, best_gain = c, g
    return best


def _check_spd(name: str, M: np.ndarray) -> None:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be square")
    if not np.allclose(M, M.T, atol=1e-10):
        raise ValueError(f"{name} must be symmetric")
    try:
        np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        raise ValueError(f"{name} must be positive definite") from None


@dataclass(frozen=True)
class ApproxPriors:
    D0: np.ndarray
    E0: np.ndarray
    mu_theta0: np.ndarray
    mu_beta0: np.ndarray
    a0: float = 2.0
    b0: float = 2e-8

    def __post_init__(self) -> None:
        _check_spd("D0", self.D0)
        _check_spd("E0", self.E0)
        if self.mu_theta0.shape != (self.D0.shape[0],):
            raise ValueError("mu_theta0 does not match D0")
        if self.mu_beta0.shape != (self.E0.shape[0],):
            raise ValueError("mu_beta0 does not match E0")
        if self.a0 <= 0 or self.b0 <= 0:
            raise ValueError("a0 and b0 must be positive")

    @property
    def p(self) -> int:
        return self.D0.shape[0]

    @property
    def basis_len(self) -> int:
        return self.E0.shape[0]

    @staticmethod
    def default(p: int, basis_len: int) -> "ApproxPriors":
        """Weak default: D0 = E0 = 1e-2 I, zero means, a0 = 2, b0 = 2e-8."""
        return ApproxPriors(
            D0=1e-2 * np.eye(p),
            E0=1e-2 * np.eye(basis_len),
            mu_theta0=np.zeros(p),
            mu_beta0=np.zeros(basis_len),
        )


@dataclass(frozen=True)
class VariationalState:
    """Natural parameters of q(theta) q(beta) q(tau) plus the ELBO trace.

    q(theta) = N(Lambda_theta^-1 eta_theta, Lambda_theta^-1), likewise for
    beta; q(tau) = Gamma(a_N, b_N) in shape/rate form.
    """

    Lambda_theta: np.ndarray
    eta_theta: np.ndarray
    Lambda_beta: np.ndarray
    eta_beta: np.ndarray
    a_N: float
    b_N: float
    elbo_trace: tuple[float, ...] = ()
    converged: bool = True
    n_iter: int = 0

    @property
    def mean_theta(self) -> np.ndarray:
        return _refined_mean(self.Lambda_theta, self.cov_theta, self.eta_theta)

    @property
    def cov_theta(self) -> np.ndarray:
        return _inv_and_logdet(self.Lambda_theta)[0]

    @property
    def mean_beta(self) -> np.ndarray:
        return _refined_mean(self.Lambda_beta, self.cov_beta, self.eta_beta)

    @property
    def cov_beta(self) -> np.ndarray:
        return _inv_and_logdet(self.Lambda_beta)[0]

    @property
    def mean_tau(self) -> float:
        return self.a_N / self.b_N


@dataclass(frozen=True)
class Moments:
    mean_theta: np.ndarray
    second_theta: np.ndarray
    mean_beta: np.ndarray
    second_beta: np.ndarray
    mean_tau: float


def moments(state: VariationalState) -> Moments:
    """First and second posterior moments implied by the natural parameters."""
    cov_t = state.cov_theta
    cov_b = state.cov_beta
    m_t = _refined_mean(state.Lambda_theta, cov_t, state.eta_theta)
    m_b = _refined_mean(state.Lambda_beta, cov_b, state.eta_beta)
    return Moments(
        mean_theta=m_t,
        second_theta=cov_t + np.outer(m_t, m_t),
        mean_beta=m_b,
        second_beta=cov_b + np.outer(m_b, m_b),
        mean_tau=state.a_N / state.b_N,
    )


def _seeded_mean(mu0: np.ndarray) -> np.ndarray:
    """Initial factor mean: the prior mean, or, when that is identically
    zero, zero with the last coordinate set to 1 to break the sign
    symmetry of the product parameterization."""
    if np.any(mu0 != 0.0):
        return mu0.astype(float).copy()
    m = np.zeros_like(mu0, dtype=float)
    m[-1] = 1.0
    return m


def _elbo_terms(
    *,
    r: np.ndarray,
    quad_lik: float,
    quad_priors: list[tuple[int, float, float]],
    logdet_covs: list[float],
    a0: float,
    b0: float,
    a_N: float,
    b_N: float,
) -> float:
    """Assemble the bound from precomputed quadratic forms.

    ``quad_priors`` rows are (dim, E[(z - mu0)' P0^-1 (z - mu0)], logdet P0)
    for each Gaussian factor; ``quad_lik`` is E[sum_i (r_i - mean_i)^2];
    ``logdet_covs`` are the log-determinants of the factor covariances.
    """
    n = len(r)
    e_ln_tau = float(digamma(a_N) - np.log(b_N))
    e_tau = a_N / b_N
    # Gamma prior on tau
    L = a0 * np.log(b0) - gammaln(a0) + (a0 - 1.0) * e_ln_tau - b0 * e_tau
    # Gaussian priors, scaled by tau
    for dim, quad, logdet_p0 in quad_priors:
        L += -0.5 * dim * LOG_2PI - 0.5 * logdet_p0 + 0.5 * dim * e_ln_tau - 0.5 * e_tau * quad
    # likelihood
    L += -0.5 * n * LOG_2PI + 0.5 * n * e_ln_tau - 0.5 * e_tau * quad_lik
    # Gaussian entropies
    for (dim, _, _), logdet_cov in zip(quad_priors, logdet_covs):
        L += 0.5 * dim * (1.0 + LOG_2PI) + 0.5 * logdet_cov
    # Gamma entropy
    L += a_N - np.log(b_N) + gammaln(a_N) + (1.0 - a_N) * digamma(a_N)
    return float(L)


def _gauss_quad(P0inv: np.ndarray, mu0: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> float:
    """E[(z - mu0)' P0^-1 (z - mu0)] under q(z) = N(mean, cov).

    Computed as tr(P0^-1 cov) + (mean - mu0)' P0^-1 (mean - mu0): both
    terms are non-negative, so no cancellation between large moments.
    """
    diff = mean - mu0
    return float(np.trace(P0inv @ cov)) + float(diff @ P0inv @ diff)


def _expected_sq_resid(
    r: np.ndarray,
    m1: np.ndarray,
    v1: np.ndarray,
    m2: np.ndarray,
    v2: np.ndarray,
    m3: np.ndarray | None = None,
    v3: np.ndarray | None = None,
) -> float:
    """E[sum_i (r_i - prod of independent factors)^2], cancellation-free.

    Uses (r - m)^2 plus non-negative variance corrections rather than
    expanding the square, so ill-conditioned fits do not lose precision.
    """
    if m3 is None:
        mean = m1 * m2
        var = m1**2 * v2 + m2**2 * v1 + v1 * v2
    else:
        assert v3 is not None
        mean = m1 * m2 * m3
        var = (
            v1 * m2**2 * m3**2
            + v2 * m1**2 * m3**2
            + v3 * m1**2 * m2**2
            + v1 * v2 * m3**2
            + v1 * v3 * m2**2
            + v2 * v3 * m1**2
            + v1 * v2 * v3
        )
    return float(np.sum((r - mean) ** 2 + var))


def vi_fit(
    records: list[HistoryRecord] | tuple[HistoryRecord, ...],
    priors: ApproxPriors,
    tol: float = 1e-6,
    max_iter: int = 200,
) -> VariationalState:
    """Coordinate-ascent fit of the mean-field posterior.

    Sweep order: q(theta), q(beta), q(tau), then the bound.  The Gaussian
    updates weight each record by the other factor's second moment, e.g.

        Lambda_theta = E[tau] (D0^-1 + sum_i (t_i' E[bb'] t_i) x_i x_i')
        eta_theta    = E[tau] (D0^-1 mu_theta0 + sum_i r_i (t_i' E[b]) x_i)

    and the Gamma rate collects the expected prior and residual quadratics.
    q(beta) and q(tau) start at their priors (zero prior means get the
    sign-symmetry-breaking seed); convergence is declared when the
    relative ELBO change drops below ``tol``.  A decrease of the bound
    beyond roundoff slack raises immediately, since exact coordinate
    ascent cannot produce one.
    """
    X, T, r, _ = design_arrays(records)
    n = len(r)
    p, K = priors.p, priors.basis_len
    if n:
        if X.shape[1] != p:
            raise ValueError(f"records carry {X.shape[1]} features, priors expect {p}")
        if T.shape[1] != K:
            raise ValueError(f"records carry basis length {T.shape[1]}, priors expect {K}")
    else:
        X = np.zeros((0, p))
        T = np.zeros((0, K))
    if tol <= 0 or max_iter < 1:
        raise ValueError("tol must be positive and max_iter at least 1")

    D0inv, logdet_D0, _ = _inv_and_logdet(priors.D0)
    E0inv, logdet_E0, _ = _inv_and_logdet(priors.E0)

    # init: q(beta), q(tau) at priors, theta updated first
    a_N = priors.a0
    b_N = priors.b0
    e_tau = a_N / b_N
    mean_b = _seeded_mean(priors.mu_beta0)
    cov_b = priors.E0 / e_tau

    trace: list[float] = []
    prev = -np.inf
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        # q(theta): weight record i by E[(beta' t_i)^2]
        m2 = T @ mean_b
        v2 = _quad_forms(T, cov_b)
        Lam_t = e_tau * (D0inv + (X * (m2**2 + v2)[:, None]).T @ X)
        eta_t = e_tau * (D0inv @ priors.mu_theta0 + X.T @ (r * m2))
        cov_t, neg_logdet_lam_t, kappa_t = _inv_and_logdet(Lam_t)
        mean_t = _refined_mean(Lam_t, cov_t, eta_t)

        # q(beta): weight record i by E[(theta' x_i)^2]
        m1 = X @ mean_t
        v1 = _quad_forms(X, cov_t)
        Lam_b = e_tau * (E0inv + (T * (m1**2 + v1)[:, None]).T @ T)
        eta_b = e_tau * (E0inv @ priors.mu_beta0 + T.T @ (r * m1))
        cov_b, neg_logdet_lam_b, kappa_b = _inv_and_logdet(Lam_b)
        mean_b = _refined_mean(Lam_b, cov_b, eta_b)

        # close the theta/beta scale ridge the blockwise steps leave open
        c = _best_rescale(
            mean_t, cov_t, D0inv, priors.mu_theta0, p,
            mean_b, cov_b, E0inv, priors.mu_beta0, K,
            e_tau,
        )
        if c != 1.0:
            lc = np.log(c)
            mean_t, cov_t = c * mean_t, (c * c) * cov_t
            Lam_t, eta_t = Lam_t / (c * c), eta_t / c
            neg_logdet_lam_t -= 2.0 * p * lc
            mean_b, cov_b = mean_b / c, cov_b / (c * c)
            Lam_b, eta_b = (c * c) * Lam_b, c * eta_b
            neg_logdet_lam_b += 2.0 * K * lc
            m1, v1 = c * m1, (c * c) * v1

        # q(tau)
        m2 = T @ mean_b
        v2 = _quad_forms(T, cov_b)
        quad_t = _gauss_quad(D0inv, priors.mu_theta0, mean_t, cov_t)
        quad_b = _gauss_quad(E0inv, priors.mu_beta0, mean_b, cov_b)
        quad_lik = _expected_sq_resid(r, m1, v1, m2, v2)
        a_N = 0.5 * (p + K + n) + priors.a0
        b_N = priors.b0 + 0.5 * quad_t + 0.5 * quad_b + 0.5 * quad_lik
        if b_N <= 0 or not np.isfinite(b_N):
            raise RuntimeError(f"variational rate collapsed: b_N = {b_N} at iteration {it}")
        e_tau = a_N / b_N

        L = _elbo_terms(
            r=r,
            quad_lik=quad_lik,
            quad_priors=[(p, quad_t, logdet_D0), (K, quad_b, logdet_E0)],
            logdet_covs=[-neg_logdet_lam_t, -neg_logdet_lam_b],
            a0=priors.a0,
            b0=priors.b0,
            a_N=a_N,
            b_N=b_N,
        )
        trace.append(L)
        if np.isfinite(prev):
            scale = max(1.0, abs(prev))
            # the bound is only evaluable to ~eps * condition of the solves
            noise = max(10.0 * max(tol, 1e-7), 50.0 * EPS * max(kappa_t, kappa_b))
            if L < prev - noise * scale:
                # beyond numerical noise: the updates are wrong, not just tired
                raise RuntimeError(
                    "ELBO decreased during coordinate ascent: "
                    f"iteration {it}, {prev!r} -> {L!r} (delta {L - prev!r})"
                )
            if L - prev <= tol * scale:
                # signed delta: a sub-tolerance dip means we hit the
                # precision floor of the bound evaluation, so stop there
                converged = True
                prev = L
                break
        prev = L

    return VariationalState(
        Lambda_theta=Lam_t,
        eta_theta=eta_t,
        Lambda_beta=Lam_b,
        eta_beta=eta_b,
        a_N=float(a_N),
        b_N=float(b_N),
        elbo_trace=tuple(trace),
        converged=converged,
        n_iter=it,
    )


def elbo(
    state: VariationalState,
    records: list[HistoryRecord] | tuple[HistoryRecord, ...],
    priors: ApproxPriors,
) -> float:
    """Evidence lower bound of ``state`` on ``records``, term by term."""
    X, T, r, _ = design_arrays(records)
    n = len(r)
    p, K = priors.p, priors.basis_len
    if not n:
        X = np.zeros((0, p))
        T = np.zeros((0, K))
    D0inv, logdet_D0, _ = _inv_and_logdet(priors.D0)
    E0inv, logdet_E0, _ = _inv_and_logdet(priors.E0)
    cov_t, neg_logdet_lam_t, _ = _inv_and_logdet(state.Lambda_theta)
    cov_b, neg_logdet_lam_b, _ = _inv_and_logdet(state.Lambda_beta)
    mean_t = _refined_mean(state.Lambda_theta, cov_t, state.eta_theta)
    mean_b = _refined_mean(state.Lambda_beta, cov_b, state.eta_beta)
    quad_lik = _expected_sq_resid(
        r,
        X @ mean_t,
        np.einsum("ij,jk,ik->i", X, cov_t, X),
        T @ mean_b,
        np.einsum("ij,jk,ik->i", T, cov_b, T),
    )
    return _elbo_terms(
        r=r,
        quad_lik=quad_lik,
        quad_priors=[
            (p, _gauss_quad(D0inv, priors.mu_theta0, mean_t, cov_t), logdet_D0),
            (K, _gauss_quad(E0inv, priors.mu_beta0, mean_b, cov_b), logdet_E0),
        ],
        logdet_covs=[-neg_logdet_lam_t, -neg_logdet_lam_b],
        a0=priors.a0,
        b0=priors.b0,
        a_N=state.a_N,
        b_N=state.b_N,
    )


# ---------------------------------------------------------------------------
# posterior prediction


@dataclass(frozen=True)
class PredictiveDistribution:
    """Posterior draws of the expected rating, with analytic moments.

    ``mean`` and ``sd`` come from the product-of-independent-normals
    identities m1 m2 and sqrt(m1^2 v2 + m2^2 v1 + v1 v2); ``samples``
    supports quantile queries.
    """

    samples: np.ndarray
    mean: float
    sd: float


def _factor_stats(state: VariationalState, x: np.ndarray, basis: np.ndarray):
    cov_t = state.cov_theta
    cov_b = state.cov_beta
    m1 = float(x @ (cov_t @ state.eta_theta))
    v1 = float(x @ cov_t @ x)
    m2 = float(basis @ (cov_b @ state.eta_beta))
    v2 = float(basis @ cov_b @ basis)
    for name, v in (("theta factor", v1), ("beta factor", v2)):
        if v < -1e-9 * (1.0 + abs(v)):
            raise ValueError(f"negative predictive variance for {name}: {v}")
    return m1, max(v1, 0.0), m2, max(v2, 0.0)


def predict_u(
    state: VariationalState,
    x: np.ndarray,
    basis: np.ndarray,
    n_samples: int = 1000,
    seed: int | np.random.SeedSequence = 0,
) -> PredictiveDistribution:
    """Posterior of U = theta'x * beta't for one song at one elapsed time.

    Draws the two linear factors independently from their Gaussian
    posteriors and multiplies them; rating noise is not added.
    """
    x = np.asarray(x, dtype=float)
    basis = np.asarray(basis, dtype=float)
    if x.shape != (state.Lambda_theta.shape[0],):
        raise ValueError("x does not match the fitted feature dimension")
    if basis.shape != (state.Lambda_beta.shape[0],):
        raise ValueError("basis does not match the fitted basis length")
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    m1, v1, m2, v2 = _factor_stats(state, x, basis)
    rng = np.random.default_rng(seed)
    samples = rng.normal(m1, np.sqrt(v1), n_samples) * rng.normal(m2, np.sqrt(v2), n_samples)
    mean = m1 * m2
    sd = float(np.sqrt(m1**2 * v2 + m2**2 * v1 + v1 * v2))
    return PredictiveDistribution(samples=samples, mean=mean, sd=sd)


def predict_u_batch(
    state: VariationalState,
    X: np.ndarray,
    B: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Factor means/variances for many songs at once: (m1, v1, m2, v2)."""
    X = np.asarray(X, dtype=float)
    B = np.asarray(B, dtype=float)
    cov_t = state.cov_theta
    cov_b = state.cov_beta
    m1 = X @ (cov_t @ state.eta_theta)
    v1 = np.maximum(np.einsum("ij,jk,ik->i", X, cov_t, X), 0.0)
    m2 = B @ (cov_b @ state.eta_beta)
    v2 = np.maximum(np.einsum("ij,jk,ik->i", B, cov_b, B), 0.0)
    return m1, v1, m2, v2


# ---------------------------------------------------------------------------
# three-factor extension


@dataclass(frozen=True)
class ThreeFactorRecord:
    """A rating carrying a third per-song descriptor vector ``d``."""

    x: np.ndarray
    basis: np.ndarray
    d: np.ndarray
    rating: float


@dataclass(frozen=True)
class ThreeFactorPriors:
    D0: np.ndarray
    E0: np.ndarray
    F0: np.ndarray
    mu_theta0: np.ndarray
    mu_beta0: np.ndarray
    mu_gamma0: np.ndarray
    a0: float = 2.0
    b0: float = 2e-8

    def __post_init__(self) -> None:
        _check_spd("D0", self.D0)
        _check_spd("E0", self.E0)
        _check_spd("F0", self.F0)
        for mu, M, name in (
            (self.mu_theta0, self.D0, "mu_theta0"),
            (self.mu_beta0, self.E0, "mu_beta0"),
            (self.mu_gamma0, self.F0, "mu_gamma0"),
        ):
            if mu.shape != (M.shape[0],):
                raise ValueError(f"{name} does not match its scale matrix")
        if self.a0 <= 0 or self.b0 <= 0:
            raise ValueError("a0 and b0 must be positive")

    @staticmethod
    def default(p: int, basis_len: int, q: int) -> "ThreeFactorPriors":
        return ThreeFactorPriors(
            D0=1e-2 * np.eye(p),
            E0=1e-2 * np.eye(basis_len),
            F0=1e-2 * np.eye(q),
            mu_theta0=np.zeros(p),
            mu_beta0=np.zeros(basis_len),
            mu_gamma0=np.zeros(q),
        )


@dataclass(frozen=True)
class ThreeFactorState:
    Lambda_theta: np.ndarray
    eta_theta: np.ndarray
    Lambda_beta: np.ndarray
    eta_beta: np.ndarray
    Lambda_gamma: np.ndarray
    eta_gamma: np.ndarray
    a_N: float
    b_N: float
    elbo_trace: tuple[float, ...] = ()
    converged: bool = True
    n_iter: int = 0

    @property
    def mean_theta(self) -> np.ndarray:
        return np.linalg.solve(self.Lambda_theta, self.eta_theta)

    @property
    def mean_beta(self) -> np.ndarray:
        return np.linalg.solve(self.Lambda_beta, self.eta_beta)

    @property
    def mean_gamma(self) -> np.ndarray:
        return np.linalg.solve(self.Lambda_gamma, self.eta_gamma)

    @property
    def mean_tau(self) -> float:
        return self.a_N / self.b_N


def vi_fit_three_factor(
    records: list[ThreeFactorRecord] | tuple[ThreeFactorRecord, ...],
    priors: ThreeFactorPriors,
    tol: float = 1e-6,
    max_iter: int = 200,
) -> ThreeFactorState:
    """Coordinate ascent for the mean theta'x * beta't * gamma'd.

    Identical structure to the two-factor fit: each Gaussian update
    weights record i by the product of the OTHER factors' expected
    quadratics, and the Gamma shape gains half of every factor dimension.
    """
    n = len(records)
    p = priors.D0.shape[0]
    K = priors.E0.shape[0]
    q = priors.F0.shape[0]
    if n:
        X = np.stack([rec.x for rec in records]).astype(float)
        T = np.stack([rec.basis for rec in records]).astype(float)
        D = np.stack([rec.d for rec in records]).astype(float)
        r = np.asarray([rec.rating for rec in records], dtype=float)
        if X.shape[1] != p or T.shape[1] != K or D.shape[1] != q:
            raise ValueError("record dimensions do not match priors")
    else:
        X, T, D = np.zeros((0, p)), np.zeros((0, K)), np.zeros((0, q))
        r = np.zeros(0)

    D0inv, logdet_D0, _ = _inv_and_logdet(priors.D0)
    E0inv, logdet_E0, _ = _inv_and_logdet(priors.E0)
    F0inv, logdet_F0, _ = _inv_and_logdet(priors.F0)

    a_N = priors.a0
    b_N = priors.b0
    e_tau = a_N / b_N
    mean_b = _seeded_mean(priors.mu_beta0)
    cov_b = priors.E0 / e_tau
    mean_g = _seeded_mean(priors.mu_gamma0)
    cov_g = priors.F0 / e_tau
    kappa_it = 1.0

    def gauss_update(
        F: np.ndarray,
        P0inv: np.ndarray,
        mu0: np.ndarray,
        other_quad: np.ndarray,
        other_mean_proj: np.ndarray,
    ):
        nonlocal kappa_it
        Lam = e_tau * (P0inv + (F * other_quad[:, None]).T @ F)
        eta = e_tau * (P0inv @ mu0 + F.T @ (r * other_mean_proj))
        cov, neg_logdet, kappa = _inv_and_logdet(Lam)
        kappa_it = max(kappa_it, kappa)
        mean = _refined_mean(Lam, cov, eta)
        return Lam, eta, cov, mean, -neg_logdet

    def proj(F: np.ndarray, mean: np.ndarray, cov: np.ndarray):
        # per-record mean and variance of the factor's linear form
        return F @ mean, _quad_forms(F, cov)

    trace: list[float] = []
    prev = -np.inf
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        kappa_it = 1.0
        m2, v2 = proj(T, mean_b, cov_b)
        m3, v3 = proj(D, mean_g, cov_g)
        Lam_t, eta_t, cov_t, mean_t, logdet_cov_t = gauss_update(
            X, D0inv, priors.mu_theta0, (m2**2 + v2) * (m3**2 + v3), m2 * m3
        )
        m1, v1 = proj(X, mean_t, cov_t)
        Lam_b, eta_b, cov_b, mean_b, logdet_cov_b = gauss_update(
            T, E0inv, priors.mu_beta0, (m1**2 + v1) * (m3**2 + v3), m1 * m3
        )
        m2, v2 = proj(T, mean_b, cov_b)
        Lam_g, eta_g, cov_g, mean_g, logdet_cov_g = gauss_update(
            D, F0inv, priors.mu_gamma0, (m1**2 + v1) * (m2**2 + v2), m1 * m2
        )
        m3, v3 = proj(D, mean_g, cov_g)

        # two scale invariances now (theta vs beta, theta vs gamma); close
        # each ridge the same way the two-factor sweep does
        c = _best_rescale(
            mean_t, cov_t, D0inv, priors.mu_theta0, p,
            mean_b, cov_b, E0inv, priors.mu_beta0, K,
            e_tau,
        )
        if c != 1.0:
            lc = np.log(c)
            mean_t, cov_t = c * mean_t, (c * c) * cov_t
            Lam_t, eta_t = Lam_t / (c * c), eta_t / c
            logdet_cov_t += 2.0 * p * lc
            mean_b, cov_b = mean_b / c, cov_b / (c * c)
            Lam_b, eta_b = (c * c) * Lam_b, c * eta_b
            logdet_cov_b -= 2.0 * K * lc
            m1, v1 = c * m1, (c * c) * v1
            m2, v2 = m2 / c, v2 / (c * c)
        c = _best_rescale(
            mean_t, cov_t, D0inv, priors.mu_theta0, p,
            mean_g, cov_g, F0inv, priors.mu_gamma0, q,
            e_tau,
        )
        if c != 1.0:
            lc = np.log(c)
            mean_t, cov_t = c * mean_t, (c * c) * cov_t
            Lam_t, eta_t = Lam_t / (c * c), eta_t / c
            logdet_cov_t += 2.0 * p * lc
            mean_g, cov_g = mean_g / c, cov_g / (c * c)
            Lam_g, eta_g = (c * c) * Lam_g, c * eta_g
            logdet_cov_g -= 2.0 * q * lc
            m1, v1 = c * m1, (c * c) * v1
            m3, v3 = m3 / c, v3 / (c * c)
        c = _best_rescale(
            mean_b, cov_b, E0inv, priors.mu_beta0, K,
            mean_g, cov_g, F0inv, priors.mu_gamma0, q,
            e_tau,
        )
        if c != 1.0:
            lc = np.log(c)
            mean_b, cov_b = c * mean_b, (c * c) * cov_b
            Lam_b, eta_b = Lam_b / (c * c), eta_b / c
            logdet_cov_b += 2.0 * K * lc
            mean_g, cov_g = mean_g / c, cov_g / (c * c)
            Lam_g, eta_g = (c * c) * Lam_g, c * eta_g
            logdet_cov_g -= 2.0 * q * lc
            m2, v2 = c * m2, (c * c) * v2
            m3, v3 = m3 / c, v3 / (c * c)

        quad_t = _gauss_quad(D0inv, priors.mu_theta0, mean_t, cov_t)
        quad_b = _gauss_quad(E0inv, priors.mu_beta0, mean_b, cov_b)
        quad_g = _gauss_quad(F0inv, priors.mu_gamma0, mean_g, cov_g)
        quad_lik = _expected_sq_resid(r, m1, v1, m2, v2, m3, v3)
        a_N = 0.5 * (p + K + q + n) + priors.a0
        b_N = priors.b0 + 0.5 * (quad_t + quad_b + quad_g + quad_lik)
        if b_N <= 0 or not np.isfinite(b_N):
            raise RuntimeError(f"variational rate collapsed: b_N = {b_N} at iteration {it}")
        e_tau = a_N / b_N

        L = _elbo_terms(
            r=r,
            quad_lik=quad_lik,
            quad_priors=[
                (p, quad_t, logdet_D0),
                (K, quad_b, logdet_E0),
                (q, quad_g, logdet_F0),
            ],
            logdet_covs=[logdet_cov_t, logdet_cov_b, logdet_cov_g],
            a0=priors.a0,
            b0=priors.b0,
            a_N=a_N,
            b_N=b_N,
        )
        trace.append(L)
        if np.isfinite(prev):
            scale = max(1.0, abs(prev))
            noise = max(10.0 * max(tol, 1e-7), 50.0 * EPS * kappa_it)
            if L < prev - noise * scale:
                raise RuntimeError(
                    "ELBO decreased during coordinate ascent: "
                    f"iteration {it}, {prev!r} -> {L!r} (delta {L - prev!r})"
                )
            if L - prev <= tol * scale:
                converged = True
                prev = L
                break
        prev = L

    return ThreeFactorState(
        Lambda_theta=Lam_t,
        eta_theta=eta_t,
        Lambda_beta=Lam_b,
        eta_beta=eta_b,
        Lambda_gamma=Lam_g,
        eta_gamma=eta_g,
        a_N=float(a_N),
        b_N=float(b_N),
        elbo_trace=tuple(trace),
        converged=converged,
        n_iter=it,
    )
