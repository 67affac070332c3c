"""Recommendation policies.

Bayes-UCB scores every song by a posterior quantile of its expected
rating and plays the argmax; the quantile level rises with the number of
recommendations already made, so early picks explore and later picks
exploit.  Two inference backends feed it (exact MCMC or the variational
approximation), alongside three baselines: a greedy maximum-likelihood
policy over the same content x novelty model, LinUCB with and without a
recency feature, and uniform random choice.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np

from .catalog import Catalog
from .exact import ExactPriors, McmcConfig, PosteriorSamples, mcmc_infer, posterior_u_matrix
from .history import HistoryRecord, design_arrays
from .novelty import NEVER_PLAYED_MINUTES, NoveltyKnots, time_basis, time_basis_matrix
from .variational import ApproxPriors, VariationalState, predict_u_batch, vi_fit

PolicyKind = Literal[
    "random",
    "greedy_cn",
    "linucb_c",
    "linucb_cn",
    "bayes_ucb_cn",
    "bayes_ucb_cn_v",
]

POLICY_KINDS: tuple[str, ...] = (
    "random",
    "greedy_cn",
    "linucb_c",
    "linucb_cn",
    "bayes_ucb_cn",
    "bayes_ucb_cn_v",
)


@dataclass(frozen=True)
class PolicyConfig:
    knots: NoveltyKnots = field(default_factory=NoveltyKnots.default)
    exact_priors: ExactPriors = field(default_factory=ExactPriors)
    approx_priors: ApproxPriors | None = None  # default built per catalog dims
    n_samples: int = 1000  # predictive draws per song for quantile scoring
    mcmc_n_samples: int = 1000
    mcmc_burn_in: int = 500
    linucb_lambda: float = 1.0
    linucb_alpha: float = 1.0
    never_played_minutes: float = NEVER_PLAYED_MINUTES
    vi_tol: float = 1e-6
    vi_max_iter: int = 200
    seed: int = 0


@dataclass
class PolicyState:
    """Mutable per-session policy state: history, recency bookkeeping, model."""

    kind: str
    config: PolicyConfig
    catalog: Catalog
    history: list[HistoryRecord] = field(default_factory=list)
    last_played: dict[str, float] = field(default_factory=dict)
    model: object | None = None
    rng: np.random.Generator = field(default_factory=np.random.default_rng)

    def select(self, now: float) -> "SelectionReport":
        return select(self, self.catalog, now)

    def record(self, song_id: str, rating: float, now: float) -> None:
        record_feedback(self, song_id, rating, now)


@dataclass(frozen=True)
class SelectionReport:
    """Outcome of one selection: the chosen song and per-song diagnostics."""

    song_id: str
    scores: np.ndarray
    means: np.ndarray | None = None
    sds: np.ndarray | None = None
    alpha: float | None = None


def make_policy(kind: str, catalog: Catalog, config: PolicyConfig = PolicyConfig()) -> PolicyState:
    if kind not in POLICY_KINDS:
        raise ValueError(f"unknown policy kind {kind!r}; expected one of {POLICY_KINDS}")
    if kind == "bayes_ucb_cn_v" and config.approx_priors is None:
        config = replace(
            config, approx_priors=ApproxPriors.default(catalog.p, config.knots.basis_len)
        )
    rng = np.random.default_rng(np.random.SeedSequence((config.seed, 0xC0FFEE)))
    return PolicyState(kind=kind, config=config, catalog=catalog, rng=rng)


def empirical_quantile(samples: np.ndarray, alpha: float) -> float:
    """Order-statistics quantile with linear interpolation."""
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise ValueError("cannot take a quantile of zero samples")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie strictly inside (0, 1), got {alpha}")
    return float(np.quantile(samples, alpha, method="linear"))


def ucb_alpha(step: int) -> float:
    """Quantile level for the step-th recommendation (1-based): 1 - 1/(step+1)."""
    if step < 1:
        raise ValueError("step is 1-based")
    return 1.0 - 1.0 / (step + 1)


def elapsed_minutes(
    last_played: dict[str, float],
    catalog: Catalog,
    now: float,
    never_played: float = NEVER_PLAYED_MINUTES,
) -> np.ndarray:
    """Minutes since each catalog song was last played (catalog order)."""
    out = np.empty(len(catalog))
    for i, song in enumerate(catalog.songs):
        if song.song_id in last_played:
            dt = now - last_played[song.song_id]
            if dt < -1e-6:
                raise ValueError(f"clock went backwards for song {song.song_id!r}: {dt}")
            out[i] = max(dt, 0.0)
        else:
            out[i] = never_played
    return out


def _child_seed(base: int, *key: int) -> int:
    return int(np.random.SeedSequence((base, *key)).generate_state(1)[0])


def _crn_quantiles(
    m1: np.ndarray,
    v1: np.ndarray,
    m2: np.ndarray,
    v2: np.ndarray,
    alpha: float,
    n_samples: int,
    seed_key: tuple[int, ...],
) -> np.ndarray:
    """Per-song empirical quantiles of the product posterior.

    The two factor draws share one pair of standard-normal vectors across
    songs (scaled per song), so songs with identical posteriors get
    identical sample rows — ties then break on catalog order — and the
    common noise cancels out of cross-song comparisons.
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed_key))
    eps1 = rng.standard_normal(n_samples)
    eps2 = rng.standard_normal(n_samples)
    draws = (m1[:, None] + np.sqrt(v1)[:, None] * eps1[None, :]) * (
        m2[:, None] + np.sqrt(v2)[:, None] * eps2[None, :]
    )
    return np.quantile(draws, alpha, axis=1, method="linear")


def _fit_backend(state: PolicyState) -> None:
    cfg = state.config
    if state.kind == "bayes_ucb_cn":
        state.model = mcmc_infer(
            state.history,
            cfg.exact_priors,
            McmcConfig(
                n_samples=cfg.mcmc_n_samples,
                burn_in=cfg.mcmc_burn_in,
                seed=_child_seed(cfg.seed, 1, len(state.history)),
            ),
            p=state.catalog.p,
        )
    elif state.kind == "bayes_ucb_cn_v":
        priors = cfg.approx_priors or ApproxPriors.default(state.catalog.p, cfg.knots.basis_len)
        state.model = vi_fit(state.history, priors, tol=cfg.vi_tol, max_iter=cfg.vi_max_iter)


def bayes_ucb_select(state: PolicyState, catalog: Catalog, now: float) -> SelectionReport:
    """Pick the song with the highest posterior quantile of expected rating.

    The quantile level is 1 - 1/(step+1) for the step-th recommendation,
    so the very first selection scores at the posterior median.  Ties go
    to the lowest catalog index.
    """
    if state.kind not in ("bayes_ucb_cn", "bayes_ucb_cn_v"):
        raise ValueError(f"bayes_ucb_select called on a {state.kind!r} policy")
    cfg = state.config
    step = len(state.history) + 1
    alpha = ucb_alpha(step)
    t_vec = elapsed_minutes(state.last_played, catalog, now, cfg.never_played_minutes)
    if state.model is None:
        _fit_backend(state)
    X = catalog.feature_matrix

    if state.kind == "bayes_ucb_cn":
        samples: PosteriorSamples = state.model  # type: ignore[assignment]
        U = posterior_u_matrix(samples, X, t_vec)
        scores = np.quantile(U, alpha, axis=0, method="linear")
        means = U.mean(axis=0)
        sds = U.std(axis=0, ddof=1)
    else:
        vi_state: VariationalState = state.model  # type: ignore[assignment]
        B = time_basis_matrix(t_vec, cfg.knots)
        m1, v1, m2, v2 = predict_u_batch(vi_state, X, B)
        scores = _crn_quantiles(m1, v1, m2, v2, alpha, cfg.n_samples, (cfg.seed, 2, step))
        means = m1 * m2
        sds = np.sqrt(m1**2 * v2 + m2**2 * v1 + v1 * v2)

    chosen = int(np.argmax(scores))
    return SelectionReport(
        song_id=catalog.songs[chosen].song_id, scores=scores, means=means, sds=sds, alpha=alpha
    )


# ---------------------------------------------------------------------------
# greedy maximum-likelihood baseline


@dataclass(frozen=True)
class GreedyFit:
    theta: np.ndarray
    s: float
    converged: bool
    objective: float


def greedy_fit(
    records: list[HistoryRecord] | tuple[HistoryRecord, ...],
    s_starts: tuple[float, ...] = (30.0, 300.0, 3000.0),
    s_bounds: tuple[float, float] = (1e-2, 1e6),
) -> GreedyFit:
    """Least-squares point fit of (theta, s) by L-BFGS-B on (theta, log s).

    Runs one deterministic start per entry of ``s_starts``, each seeded
    with the closed-form theta given that s, and keeps the best final
    objective.  Requires at least one record.
    """
    from scipy.optimize import minimize

    if not records:
        raise ValueError("greedy_fit needs at least one record")
    X, _, r, t_raw = design_arrays(records)
    p = X.shape[1]

    def objective(z: np.ndarray) -> tuple[float, np.ndarray]:
        theta, u = z[:p], z[p]
        s = np.exp(u)
        g = t_raw / s
        nov = 1.0 - np.exp(-g)
        pred = (X @ theta) * nov
        resid = r - pred
        f = float(resid @ resid)
        grad_theta = -2.0 * X.T @ (resid * nov)
        grad_u = float(2.0 * np.sum(resid * (X @ theta) * g * np.exp(-g)))
        return f, np.concatenate([grad_theta, [grad_u]])

    lo, hi = np.log(s_bounds[0]), np.log(s_bounds[1])
    bounds = [(None, None)] * p + [(lo, hi)]
    best = None
    for s0 in s_starts:
        nov0 = 1.0 - np.exp(-t_raw / s0)
        theta0, *_ = np.linalg.lstsq(X * nov0[:, None], r, rcond=None)
        z0 = np.concatenate([theta0, [np.log(s0)]])
        res = minimize(objective, z0, jac=True, method="L-BFGS-B", bounds=bounds)
        if best is None or res.fun < best.fun:
            best = res
    assert best is not None
    return GreedyFit(
        theta=best.x[:p],
        s=float(np.exp(best.x[p])),
        converged=bool(best.success),
        objective=float(best.fun),
    )


def greedy_select(state: PolicyState, catalog: Catalog, now: float) -> SelectionReport:
    """Play the argmax of the point-estimate expected rating (no exploration)."""
    cfg = state.config
    t_vec = elapsed_minutes(state.last_played, catalog, now, cfg.never_played_minutes)
    fit: GreedyFit | None = state.model  # type: ignore[assignment]
    if fit is None:
        scores = np.zeros(len(catalog))
    else:
        scores = (catalog.feature_matrix @ fit.theta) * (1.0 - np.exp(-t_vec / fit.s))
    chosen = int(np.argmax(scores))
    return SelectionReport(song_id=catalog.songs[chosen].song_id, scores=scores)


# ---------------------------------------------------------------------------
# LinUCB baselines


@dataclass
class LinUcbModel:
    A: np.ndarray
    b: np.ndarray


def _linucb_features(X: np.ndarray, t_vec: np.ndarray, kind: str) -> np.ndarray:
    if kind == "linucb_cn":
        return np.concatenate([X, (t_vec / 1440.0)[:, None]], axis=1)  # elapsed days
    return X


def linucb_select(state: PolicyState, catalog: Catalog, now: float) -> SelectionReport:
    """Ridge point estimate plus an exploration width alpha * sqrt(z' A^-1 z)."""
    cfg = state.config
    t_vec = elapsed_minutes(state.last_played, catalog, now, cfg.never_played_minutes)
    Z = _linucb_features(catalog.feature_matrix, t_vec, state.kind)
    d = Z.shape[1]
    model: LinUcbModel | None = state.model  # type: ignore[assignment]
    if model is None:
        model = LinUcbModel(A=cfg.linucb_lambda * np.eye(d), b=np.zeros(d))
        state.model = model
    w = np.linalg.solve(model.A, model.b)
    AinvZt = np.linalg.solve(model.A, Z.T)
    widths = np.sqrt(np.maximum(np.einsum("ij,ji->i", Z, AinvZt), 0.0))
    scores = Z @ w + cfg.linucb_alpha * widths
    chosen = int(np.argmax(scores))
    return SelectionReport(song_id=catalog.songs[chosen].song_id, scores=scores, means=Z @ w)


def random_select(catalog: Catalog, rng: np.random.Generator) -> SelectionReport:
    idx = int(rng.integers(len(catalog)))
    scores = np.zeros(len(catalog))
    scores[idx] = 1.0
    return SelectionReport(song_id=catalog.songs[idx].song_id, scores=scores)


# ---------------------------------------------------------------------------
# shared entry points


def select(state: PolicyState, catalog: Catalog, now: float) -> SelectionReport:
    if state.kind in ("bayes_ucb_cn", "bayes_ucb_cn_v"):
        return bayes_ucb_select(state, catalog, now)
    if state.kind == "greedy_cn":
        return greedy_select(state, catalog, now)
    if state.kind in ("linucb_c", "linucb_cn"):
        return linucb_select(state, catalog, now)
    if state.kind == "random":
        return random_select(catalog, state.rng)
    raise ValueError(f"unknown policy kind {state.kind!r}")


def record_feedback(state: PolicyState, song_id: str, rating: float, now: float) -> None:
    """Append one rating, update recency bookkeeping, refit the model.

    Songs never played before are credited the never-played elapsed time.
    LinUCB updates its sufficient statistics incrementally; the model-based
    policies refit on the whole history.
    """
    if not np.isfinite(rating):
        raise ValueError("rating must be finite")
    song = state.catalog.by_id(song_id)
    cfg = state.config
    prev = state.last_played.get(song_id)
    if prev is None:
        t_raw = cfg.never_played_minutes
    else:
        dt = now - prev
        if dt < -1e-6:
            raise ValueError(f"clock went backwards: now={now} < last_played={prev}")
        t_raw = max(dt, 0.0)
    basis = time_basis(t_raw, cfg.knots)
    state.history.append(
        HistoryRecord(
            x=song.reduced, t_raw=t_raw, basis=basis, rating=float(rating), at=now, song_id=song_id
        )
    )
    state.last_played[song_id] = now

    if state.kind == "greedy_cn":
        state.model = greedy_fit(state.history)
    elif state.kind in ("linucb_c", "linucb_cn"):
        t_arr = np.asarray([t_raw])
        z = _linucb_features(song.reduced[None, :], t_arr, state.kind)[0]
        model: LinUcbModel | None = state.model  # type: ignore[assignment]
        if model is None:
            d = len(z)
            model = LinUcbModel(A=cfg.linucb_lambda * np.eye(d), b=np.zeros(d))
            state.model = model
        model.A += np.outer(z, z)
        model.b += rating * z
    elif state.kind in ("bayes_ucb_cn", "bayes_ucb_cn_v"):
        _fit_backend(state)
