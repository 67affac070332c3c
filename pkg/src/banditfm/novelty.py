"""Novelty dynamics and the piecewise-linear time basis.

A song's appeal recovers with the time ``t`` (minutes) since it was last
played:

    novelty(t, s) = 1 - exp(-t / s)

where ``s`` controls the recovery rate.  Because ``s`` enters the mean
non-linearly, the approximate rating model swaps the exponential for a
piecewise-linear expansion of ``t`` over a fixed knot ladder, which keeps
inference conjugate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Dyadic knot ladder spanning ~8 seconds to ~34 hours (minutes).
DEFAULT_KNOTS_MINUTES: tuple[float, ...] = tuple(float(2.0**k) for k in range(-3, 12))

# Elapsed time credited to songs that were never played: one month, in minutes.
NEVER_PLAYED_MINUTES: float = 43200.0


def novelty(t: float | np.ndarray, s: float) -> float | np.ndarray:
    """Recovered fraction of appeal after ``t`` minutes, 1 - exp(-t/s).

    Monotone increasing in ``t``, 0 at ``t = 0``, and -> 1 as ``t`` grows.
    """
    if s <= 0:
        raise ValueError(f"recovery rate s must be positive, got {s}")
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("elapsed time t must be non-negative")
    out = 1.0 - np.exp(-t / s)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class NoveltyKnots:
    """Interior knots of the piecewise-linear time basis.

    ``xi`` must be strictly increasing and positive.  With ``K - 1`` knots
    the basis has ``K + 1`` columns: one hinge ``(t - xi_j)_+`` per knot,
    then the identity column ``t`` and a constant 1.
    """

    xi: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.xi) < 1:
            raise ValueError("need at least one knot")
        arr = np.asarray(self.xi, dtype=float)
        if np.any(~np.isfinite(arr)) or np.any(arr <= 0):
            raise ValueError("knots must be finite and positive")
        if np.any(np.diff(arr) <= 0):
            raise ValueError("knots must be strictly increasing")

    @property
    def basis_len(self) -> int:
        return len(self.xi) + 2

    @staticmethod
    def default() -> "NoveltyKnots":
        return NoveltyKnots(DEFAULT_KNOTS_MINUTES)


def time_basis(t: float, knots: NoveltyKnots) -> np.ndarray:
    """Hinge expansion [(t-xi_1)_+, ..., (t-xi_{K-1})_+, t, 1] of one time."""
    if not np.isfinite(t) or t < 0:
        raise ValueError(f"elapsed time must be finite and non-negative, got {t}")
    hinges = np.maximum(t - np.asarray(knots.xi, dtype=float), 0.0)
    return np.concatenate([hinges, [t, 1.0]])


def time_basis_matrix(ts: np.ndarray, knots: NoveltyKnots) -> np.ndarray:
    """Row-stacked time_basis for a vector of elapsed times, shape (N, K+1)."""
    ts = np.asarray(ts, dtype=float)
    if ts.ndim != 1:
        raise ValueError("ts must be one-dimensional")
    if np.any(~np.isfinite(ts)) or np.any(ts < 0):
        raise ValueError("elapsed times must be finite and non-negative")
    hinges = np.maximum(ts[:, None] - np.asarray(knots.xi, dtype=float)[None, :], 0.0)
    return np.concatenate([hinges, ts[:, None], np.ones((len(ts), 1))], axis=1)


def fit_piecewise(
    s: float,
    knots: NoveltyKnots,
    grid: np.ndarray | None = None,
) -> np.ndarray:
    """Least-squares weights making the basis approximate novelty(t, s).

    Fits ``basis(t) @ w ~ 1 - exp(-t/s)`` over ``grid`` (default: a dense
    mix of linear and geometric points covering [0, 2 * max knot]).
    Returns the weight vector of length ``knots.basis_len``.
    """
    if s <= 0:
        raise ValueError("recovery rate s must be positive")
    if grid is None:
        hi = 2.0 * max(knots.xi)
        grid = np.unique(
            np.concatenate(
                [
                    np.linspace(0.0, hi, 2001),
                    np.geomspace(min(knots.xi) / 8.0, hi, 1000),
                    np.asarray(knots.xi, dtype=float),
                ]
            )
        )
    grid = np.asarray(grid, dtype=float)
    if grid.size < knots.basis_len:
        raise ValueError("grid has fewer points than basis columns")
    A = time_basis_matrix(grid, knots)
    y = novelty(grid, s)
    w, _, rank, _ = np.linalg.lstsq(A, y, rcond=None)
    if rank < A.shape[1]:
        raise ValueError("time-basis design is rank deficient on this grid")
    return w
