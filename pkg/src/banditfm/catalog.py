"""Song catalogs: CSV loading, PCA reduction, projection."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class SongFeatures:
    """One catalog entry: identity plus raw and reduced feature vectors.

    ``reduced`` equals ``raw`` until a PCA model has been applied.
    """

    song_id: str
    title: str
    artist: str
    raw: np.ndarray
    reduced: np.ndarray


@dataclass(frozen=True)
class Catalog:
    songs: tuple[SongFeatures, ...]
    p: int

    def __post_init__(self) -> None:
        if not self.songs:
            raise ValueError("catalog is empty")
        ids = [s.song_id for s in self.songs]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise ValueError(f"duplicate song_id values: {dupes[:5]}")
        for s in self.songs:
            if s.reduced.shape != (self.p,):
                raise ValueError(
                    f"song {s.song_id!r} has reduced dim {s.reduced.shape}, expected ({self.p},)"
                )
            if not np.all(np.isfinite(s.raw)) or not np.all(np.isfinite(s.reduced)):
                raise ValueError(f"song {s.song_id!r} has non-finite features")

    def __len__(self) -> int:
        return len(self.songs)

    @cached_property
    def feature_matrix(self) -> np.ndarray:
        """Reduced features stacked in catalog order, shape (n_songs, p)."""
        return np.stack([s.reduced for s in self.songs])

    @cached_property
    def index_of(self) -> dict[str, int]:
        return {s.song_id: i for i, s in enumerate(self.songs)}

    def by_id(self, song_id: str) -> SongFeatures:
        try:
            return self.songs[self.index_of[song_id]]
        except KeyError:
            raise KeyError(f"unknown song_id {song_id!r}") from None


def load_catalog(path: str | Path) -> Catalog:
    """Read a catalog CSV with header ``song_id,title,artist,f0,f1,...``.

    Every row must carry the same number of numeric feature columns.
    The loaded features populate both ``raw`` and ``reduced``.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: empty catalog file")
        if header[:3] != ["song_id", "title", "artist"]:
            raise ValueError(f"{path}: header must start with song_id,title,artist")
        d = len(header) - 3
        if d < 1:
            raise ValueError(f"{path}: no feature columns")
        songs: list[SongFeatures] = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3 + d:
                raise ValueError(f"{path}:{lineno}: expected {3 + d} columns, got {len(row)}")
            try:
                feats = np.array([float(v) for v in row[3:]], dtype=float)
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: non-numeric feature: {exc}") from None
            if not np.all(np.isfinite(feats)):
                raise ValueError(f"{path}:{lineno}: non-finite feature value")
            songs.append(
                SongFeatures(song_id=row[0], title=row[1], artist=row[2], raw=feats, reduced=feats)
            )
    if not songs:
        raise ValueError(f"{path}: catalog has no rows")
    return Catalog(songs=tuple(songs), p=d)


def save_catalog(catalog: Catalog, path: str | Path, which: str = "reduced") -> None:
    """Write a catalog back to CSV; floats use repr so reloads are bit-identical."""
    if which not in ("raw", "reduced"):
        raise ValueError("which must be 'raw' or 'reduced'")
    path = Path(path)
    dim = len(getattr(catalog.songs[0], which))
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["song_id", "title", "artist"] + [f"f{i}" for i in range(dim)])
        for s in catalog.songs:
            vec = getattr(s, which)
            writer.writerow([s.song_id, s.title, s.artist] + [repr(float(v)) for v in vec])


@dataclass(frozen=True)
class PcaModel:
    """Centered PCA: rows of ``components`` are orthonormal principal axes."""

    mean: np.ndarray
    components: np.ndarray
    explained_variance_ratio: np.ndarray

    @property
    def n_components(self) -> int:
        return self.components.shape[0]

    def to_json(self, path: str | Path) -> None:
        payload = {
            "mean": self.mean.tolist(),
            "components": self.components.tolist(),
            "explained_variance_ratio": self.explained_variance_ratio.tolist(),
        }
        Path(path).write_text(json.dumps(payload))

    @staticmethod
    def from_json(path: str | Path) -> "PcaModel":
        payload = json.loads(Path(path).read_text())
        return PcaModel(
            mean=np.asarray(payload["mean"], dtype=float),
            components=np.asarray(payload["components"], dtype=float),
            explained_variance_ratio=np.asarray(payload["explained_variance_ratio"], dtype=float),
        )


def fit_pca(data: np.ndarray, variance_target: float) -> PcaModel:
    """Fit centered PCA keeping the fewest components reaching variance_target.

    Eigendecomposes the sample covariance (N-1 normalization; centering
    only, no scaling).  Components are sorted by decreasing eigenvalue and
    sign-fixed so each row's largest-magnitude entry is positive.
    """
    data = np.asarray(data, dtype=float)
    if data.ndim != 2:
        raise ValueError("data must be a 2-D array (rows = songs)")
    n, d = data.shape
    if n < 2:
        raise ValueError("need at least two rows to fit PCA")
    if not (0 < variance_target <= 1):
        raise ValueError("variance_target must lie in (0, 1]")
    mean = data.mean(axis=0)
    centered = data - mean
    cov = centered.T @ centered / (n - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = np.clip(eigvals[order], 0.0, None)
    eigvecs = eigvecs[:, order]
    total = eigvals.sum()
    if total <= 0:
        raise ValueError("degenerate covariance: data has zero variance")
    ratio = eigvals / total
    k = int(np.searchsorted(np.cumsum(ratio), variance_target - 1e-12) + 1)
    k = min(k, d)
    components = eigvecs[:, :k].T.copy()
    for row in components:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    return PcaModel(mean=mean, components=components, explained_variance_ratio=ratio[:k])


def project(model: PcaModel, raw: np.ndarray) -> np.ndarray:
    """Project raw features onto the model's principal axes."""
    raw = np.asarray(raw, dtype=float)
    if raw.shape[-1] != model.mean.shape[0]:
        raise ValueError(
            f"raw feature dim {raw.shape[-1]} does not match model dim {model.mean.shape[0]}"
        )
    return (raw - model.mean) @ model.components.T


def reduce_catalog(catalog: Catalog, model: PcaModel) -> Catalog:
    """New catalog whose reduced vectors are the PCA projections of raw."""
    songs = tuple(
        SongFeatures(
            song_id=s.song_id,
            title=s.title,
            artist=s.artist,
            raw=s.raw,
            reduced=project(model, s.raw),
        )
        for s in catalog.songs
    )
    return Catalog(songs=songs, p=model.n_components)
