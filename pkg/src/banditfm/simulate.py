"""Simulation harness: synthetic listeners, session clock, episodes, metrics."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from .catalog import Catalog, SongFeatures
from .history import HistoryRecord
from .novelty import NEVER_PLAYED_MINUTES, NoveltyKnots, time_basis_matrix
from .policies import SelectionReport, elapsed_minutes
from .variational import ApproxPriors, predict_u_batch, vi_fit


@dataclass(frozen=True)
class SimulatedUser:
    """Ground-truth listener: content preferences, recovery rate, rating noise."""

    theta: np.ndarray
    s: float
    sigma_r: float = 0.5

    def __post_init__(self) -> None:
        if self.s <= 0:
            raise ValueError("recovery rate s must be positive")
        if self.sigma_r < 0:
            raise ValueError("sigma_r must be non-negative")


def sample_user(
    rng: np.random.Generator,
    p: int,
    s_range: tuple[float, float] = (100.0, 1000.0),
    sigma_r: float = 0.5,
) -> SimulatedUser:
    """Standard-normal preferences and a uniform recovery rate."""
    lo, hi = s_range
    if not 0 < lo < hi:
        raise ValueError("s_range must be 0 < lo < hi")
    return SimulatedUser(theta=rng.standard_normal(p), s=float(rng.uniform(lo, hi)), sigma_r=sigma_r)


def true_expected_rating(user: SimulatedUser, x: np.ndarray, t: float | np.ndarray):
    """theta' x * (1 - exp(-t/s)) under the user's true parameters."""
    x = np.asarray(x, dtype=float)
    content = x @ user.theta if x.ndim == 1 else x @ user.theta
    out = content * (1.0 - np.exp(-np.asarray(t, dtype=float) / user.s))
    return float(out) if np.ndim(out) == 0 else out


def draw_rating(user: SimulatedUser, x: np.ndarray, t: float, rng: np.random.Generator) -> float:
    return float(true_expected_rating(user, x, t) + user.sigma_r * rng.standard_normal())


def synthetic_catalog(n_songs: int, p: int, seed: int = 0, gain_sd: float = 0.0) -> Catalog:
    """Catalog with standard-normal feature vectors, for simulations.

    ``gain_sd`` > 0 scales each song's features by an independent
    log-normal gain, giving the content values a heavy right tail — a
    catalog where a handful of songs clearly dominate, as real listener
    libraries do.
    """
    if n_songs < 1 or p < 1:
        raise ValueError("need at least one song and one feature")
    if gain_sd < 0:
        raise ValueError("gain_sd must be non-negative")
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0x5EED)))
    width = len(str(n_songs - 1))
    songs = []
    for i in range(n_songs):
        feats = rng.standard_normal(p)
        if gain_sd > 0:
            feats = feats * np.exp(gain_sd * rng.standard_normal())
        songs.append(
            SongFeatures(
                song_id=f"s{i:0{width}d}",
                title=f"track-{i}",
                artist=f"artist-{i % max(n_songs // 8, 1):03d}",
                raw=feats,
                reduced=feats,
            )
        )
    return Catalog(songs=tuple(songs), p=p)


@dataclass
class SessionClock:
    """Listening-session timeline: one rating every 50 seconds, and a
    4-minute pause after every block of 20 recommendations."""

    seconds_per_rec: float = 50.0
    recs_per_session: int = 20
    gap_minutes: float = 4.0
    now: float = 0.0
    n_recs: int = 0

    def advance(self) -> float:
        """Move to the next recommendation instant and return it (minutes)."""
        if self.n_recs > 0 and self.n_recs % self.recs_per_session == 0:
            self.now += self.gap_minutes
        self.now += self.seconds_per_rec / 60.0
        self.n_recs += 1
        return self.now


class Policy(Protocol):
    def select(self, now: float) -> SelectionReport: ...

    def record(self, song_id: str, rating: float, now: float) -> None: ...


@dataclass
class OraclePolicy:
    """Plays the song with the highest true expected rating; for baselines
    and regret sanity checks only."""

    user: SimulatedUser
    catalog: Catalog
    never_played: float = NEVER_PLAYED_MINUTES
    last_played: dict[str, float] = field(default_factory=dict)

    def select(self, now: float) -> SelectionReport:
        t_vec = elapsed_minutes(self.last_played, self.catalog, now, self.never_played)
        scores = true_expected_rating(self.user, self.catalog.feature_matrix, t_vec)
        chosen = int(np.argmax(scores))
        return SelectionReport(song_id=self.catalog.songs[chosen].song_id, scores=scores)

    def record(self, song_id: str, rating: float, now: float) -> None:
        self.last_played[song_id] = now


@dataclass(frozen=True)
class EpisodeTrace:
    song_ids: tuple[str, ...]
    ratings: np.ndarray
    true_u: np.ndarray
    best_u: np.ndarray
    times: np.ndarray

    def __len__(self) -> int:
        return len(self.song_ids)


def run_episode(
    policy: Policy,
    user: SimulatedUser,
    catalog: Catalog,
    n: int,
    clock: SessionClock | None = None,
    rng: np.random.Generator | None = None,
    never_played: float = NEVER_PLAYED_MINUTES,
) -> EpisodeTrace:
    """Drive ``n`` select/rate cycles against a simulated user.

    At every step the environment computes each song's true expected rating at
    the current elapsed times (before the chosen play is recorded), so
    the trace carries both the reward obtained and the best available.
    """
    if n < 1:
        raise ValueError("episode needs at least one step")
    clock = clock if clock is not None else SessionClock()
    rng = rng if rng is not None else np.random.default_rng()
    env_last: dict[str, float] = {}
    ids: list[str] = []
    ratings = np.empty(n)
    true_u = np.empty(n)
    best_u = np.empty(n)
    times = np.empty(n)
    X = catalog.feature_matrix
    for step in range(n):
        now = clock.advance()
        report = policy.select(now)
        t_vec = elapsed_minutes(env_last, catalog, now, never_played)
        u_all = true_expected_rating(user, X, t_vec)
        i = catalog.index_of[report.song_id]
        r = float(u_all[i] + user.sigma_r * rng.standard_normal())
        policy.record(report.song_id, r, now)
        env_last[report.song_id] = now
        ids.append(report.song_id)
        ratings[step] = r
        true_u[step] = u_all[i]
        best_u[step] = u_all.max()
        times[step] = now
    return EpisodeTrace(
        song_ids=tuple(ids), ratings=ratings, true_u=true_u, best_u=best_u, times=times
    )


def regret(trace: EpisodeTrace) -> np.ndarray:
    """Cumulative sum of (best available - obtained) true expected rating.

    Non-negative and non-decreasing by construction.
    """
    return np.cumsum(trace.best_u - trace.true_u)


def uncertainty_metric(sds: np.ndarray) -> float:
    """Mean posterior predictive sd across the catalog."""
    sds = np.asarray(sds, dtype=float)
    if sds.size == 0:
        raise ValueError("no sds given")
    if np.any(~np.isfinite(sds)) or np.any(sds < 0):
        raise ValueError("sds must be finite and non-negative")
    return float(sds.mean())


def posterior_uncertainty(
    history: list[HistoryRecord],
    last_played: dict[str, float],
    catalog: Catalog,
    now: float,
    knots: NoveltyKnots | None = None,
    priors: ApproxPriors | None = None,
) -> float:
    """Uncertainty summary of a history: fit the variational model to it and
    average the posterior predictive sd over the whole catalog.

    Used to compare how quickly policies contract the posterior; the same
    evaluator is applied to every policy's history regardless of which
    model the policy itself runs.
    """
    knots = knots if knots is not None else NoveltyKnots.default()
    priors = priors if priors is not None else ApproxPriors.default(catalog.p, knots.basis_len)
    state = vi_fit(history, priors)
    t_vec = elapsed_minutes(last_played, catalog, now)
    B = time_basis_matrix(t_vec, knots)
    m1, v1, m2, v2 = predict_u_batch(state, catalog.feature_matrix, B)
    sds = np.sqrt(m1**2 * v2 + m2**2 * v1 + v1 * v2)
    return uncertainty_metric(sds)


@dataclass(frozen=True)
class ComparisonResult:
    """Regret curves for several policies over a shared set of seeds."""

    policies: tuple[str, ...]
    seeds: tuple[int, ...]
    regret_curves: dict[str, np.ndarray]  # (n_seeds, n_steps) per policy
    traces: dict[str, tuple[EpisodeTrace, ...]]

    def final_regret(self, kind: str) -> np.ndarray:
        return self.regret_curves[kind][:, -1]


def _seed_int(*key: int) -> int:
    return int(np.random.SeedSequence(tuple(key)).generate_state(1)[0])


def run_comparison(cfg, log=None) -> ComparisonResult:
    """Run every configured policy against the same users and collect regret.

    ``cfg`` is an ExperimentConfig.  Seed k gets one sampled user shared by
    all policies so that per-seed comparisons are paired; policy models,
    selection sampling and rating noise all derive deterministically from
    ``master_seed``.
    """
    from .catalog import load_catalog
    from .config import ExperimentConfig
    from .policies import PolicyConfig, make_policy

    assert isinstance(cfg, ExperimentConfig)
    if cfg.catalog_path is not None:
        catalog = load_catalog(cfg.catalog_path)
    else:
        catalog = synthetic_catalog(
            cfg.n_songs, cfg.p, seed=cfg.master_seed, gain_sd=cfg.catalog_gain_sd
        )
    knots = NoveltyKnots(cfg.knots) if cfg.knots is not None else NoveltyKnots.default()

    curves = {kind: np.empty((len(cfg.seeds), cfg.n_steps)) for kind in cfg.policies}
    traces: dict[str, list[EpisodeTrace]] = {kind: [] for kind in cfg.policies}
    for si, seed in enumerate(cfg.seeds):
        user = sample_user(
            np.random.default_rng(np.random.SeedSequence((cfg.master_seed, seed, 11))),
            catalog.p,
            s_range=cfg.s_range,
            sigma_r=cfg.sigma_r,
        )
        for ki, kind in enumerate(cfg.policies):
            pcfg = PolicyConfig(
                knots=knots,
                n_samples=cfg.n_samples,
                mcmc_n_samples=cfg.mcmc_n_samples,
                mcmc_burn_in=cfg.mcmc_burn_in,
                linucb_lambda=cfg.linucb_lambda,
                linucb_alpha=cfg.linucb_alpha,
                never_played_minutes=cfg.never_played_minutes,
                seed=_seed_int(cfg.master_seed, seed, ki),
            )
            policy = make_policy(kind, catalog, pcfg)
            trace = run_episode(
                policy,
                user,
                catalog,
                cfg.n_steps,
                clock=SessionClock(),
                rng=np.random.default_rng(np.random.SeedSequence((cfg.master_seed, seed, ki, 13))),
                never_played=cfg.never_played_minutes,
            )
            curves[kind][si] = regret(trace)
            traces[kind].append(trace)
            if log is not None:
                log(f"seed {seed} {kind}: final regret {curves[kind][si, -1]:.2f}")
    return ComparisonResult(
        policies=tuple(cfg.policies),
        seeds=tuple(cfg.seeds),
        regret_curves=curves,
        traces={k: tuple(v) for k, v in traces.items()},
    )


def paired_pvalue(a: np.ndarray, b: np.ndarray, alternative: str = "less") -> float:
    """One-sided paired t-test p-value for mean(a - b) vs 0."""
    from scipy.stats import ttest_rel

    res = ttest_rel(a, b, alternative=alternative)
    return float(res.pvalue)


@dataclass(frozen=True)
class ZipfFit:
    """Log-log rank/frequency regression of play counts."""

    ranks: np.ndarray
    freqs: np.ndarray
    slope: float
    r_squared: float
    n_points: int
    degenerate: bool = False


def zipf_analysis(song_ids: tuple[str, ...] | list[str]) -> ZipfFit:
    """Fit ln(freq) ~ ln(rank) over the distinct songs played.

    Frequencies are sorted descending and ranked from 1.  Fewer than two
    distinct songs leaves the slope undefined: the fit is flagged
    degenerate with zero regression points.
    """
    if not song_ids:
        raise ValueError("empty play sequence")
    counts = Counter(song_ids)
    freqs = np.sort(np.asarray(list(counts.values()), dtype=float))[::-1]
    ranks = np.arange(1, len(freqs) + 1, dtype=float)
    if len(freqs) < 2:
        return ZipfFit(
            ranks=ranks, freqs=freqs, slope=0.0, r_squared=0.0, n_points=0, degenerate=True
        )
    lx, ly = np.log(ranks), np.log(freqs)
    slope, intercept = np.polyfit(lx, ly, 1)
    fitted = slope * lx + intercept
    ss_res = float(np.sum((ly - fitted) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return ZipfFit(
        ranks=ranks,
        freqs=freqs,
        slope=float(slope),
        r_squared=float(r2),
        n_points=len(freqs),
        degenerate=False,
    )
