"""Rating history records shared by the inference backends."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class HistoryRecord:
    """One observed rating.

    ``t_raw`` is the elapsed time (minutes) since the song was last played
    at the moment it was recommended; ``basis`` is its hinge expansion for
    the approximate model.  ``at`` is the absolute timestamp (minutes) of
    the rating, kept for bookkeeping and snapshots.
    """

    x: np.ndarray
    t_raw: float
    basis: np.ndarray
    rating: float
    at: float = 0.0
    song_id: str = ""

    def __post_init__(self) -> None:
        if self.t_raw < 0 or not np.isfinite(self.t_raw):
            raise ValueError(f"t_raw must be finite and non-negative, got {self.t_raw}")
        if not np.isfinite(self.rating):
            raise ValueError("rating must be finite")


def design_arrays(records: list[HistoryRecord] | tuple[HistoryRecord, ...]):
    """Stack records into (X, T, r, t_raw) design arrays.

    X is (N, p) song features, T is (N, K) time-basis rows, r the ratings
    and t_raw the raw elapsed minutes.  N = 0 yields empty arrays with
    zero-width second axes.
    """
    if not records:
        return (
            np.zeros((0, 0)),
            np.zeros((0, 0)),
            np.zeros(0),
            np.zeros(0),
        )
    X = np.stack([rec.x for rec in records]).astype(float)
    T = np.stack([rec.basis for rec in records]).astype(float)
    r = np.asarray([rec.rating for rec in records], dtype=float)
    t_raw = np.asarray([rec.t_raw for rec in records], dtype=float)
    if X.ndim != 2 or T.ndim != 2:
        raise ValueError("records must carry 1-D feature and basis vectors")
    return X, T, r, t_raw
