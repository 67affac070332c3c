"""JSON-loadable experiment configuration."""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from pathlib import Path

from .novelty import NEVER_PLAYED_MINUTES
from .policies import POLICY_KINDS


@dataclass(frozen=True)
class ExperimentConfig:
    """Settings for a simulated comparison run.

    A catalog is loaded from ``catalog_path`` when given, otherwise a
    synthetic one with ``n_songs`` songs and ``p`` features is generated
    from ``master_seed``.  Every policy faces the same user per seed.
    """

    catalog_path: str | None = None
    n_songs: int = 200
    p: int = 10
    catalog_gain_sd: float = 0.0  # heavy-tailed content gains when > 0
    policies: tuple[str, ...] = ("random", "linucb_c", "greedy_cn", "bayes_ucb_cn_v")
    n_steps: int = 200
    seeds: tuple[int, ...] = tuple(range(10))
    sigma_r: float = 0.5
    s_range: tuple[float, float] = (100.0, 1000.0)
    knots: tuple[float, ...] | None = None  # None = default dyadic ladder
    n_samples: int = 1000
    mcmc_n_samples: int = 1000
    mcmc_burn_in: int = 500
    linucb_lambda: float = 1.0
    linucb_alpha: float = 1.0
    master_seed: int = 0
    never_played_minutes: float = NEVER_PLAYED_MINUTES

    def __post_init__(self) -> None:
        for kind in self.policies:
            if kind not in POLICY_KINDS:
                raise ValueError(f"unknown policy {kind!r}; expected one of {POLICY_KINDS}")
        if self.n_steps < 1:
            raise ValueError("n_steps must be positive")
        if not self.seeds:
            raise ValueError("need at least one seed")
        if self.sigma_r < 0:
            raise ValueError("sigma_r must be non-negative")


_TUPLE_FIELDS = {"policies", "seeds", "s_range", "knots"}


def load_config(path: str | Path) -> ExperimentConfig:
    """Read an ExperimentConfig from JSON; unknown keys are rejected."""
    payload = json.loads(Path(path).read_text())
    if not isinstance(payload, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(payload) - known)
    if unknown:
        raise ValueError(f"{path}: unknown config keys {unknown}")
    for key in _TUPLE_FIELDS:
        if key in payload and payload[key] is not None:
            payload[key] = tuple(payload[key])
    return ExperimentConfig(**payload)


def dump_config(cfg: ExperimentConfig, path: str | Path) -> None:
    payload = {}
    for f in fields(ExperimentConfig):
        v = getattr(cfg, f.name)
        payload[f.name] = list(v) if isinstance(v, tuple) else v
    Path(path).write_text(json.dumps(payload, indent=2))
