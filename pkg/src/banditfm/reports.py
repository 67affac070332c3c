"""Delimited outputs and figures for simulation reports."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .simulate import ComparisonResult, EpisodeTrace, ZipfFit, paired_pvalue, regret

plt.rcParams.update(
    {
        "figure.figsize": (7.0, 4.5),
        "figure.dpi": 110,
        "axes.grid": True,
        "grid.alpha": 0.3,
        "axes.spines.top": False,
        "axes.spines.right": False,
        "font.size": 10,
    }
)

POLICY_LABELS = {
    "random": "Random",
    "greedy_cn": "Greedy-CN",
    "linucb_c": "LinUCB-C",
    "linucb_cn": "LinUCB-CN",
    "bayes_ucb_cn": "Bayes-UCB-CN (MCMC)",
    "bayes_ucb_cn_v": "Bayes-UCB-CN (VI)",
}


def _label(kind: str) -> str:
    return POLICY_LABELS.get(kind, kind)


def write_run_csv(trace: EpisodeTrace, path: str | Path) -> None:
    """One row per step: step,song_id,rating,true_u,best_u,cum_regret."""
    cum = regret(trace)
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "song_id", "rating", "true_u", "best_u", "cum_regret"])
        for i in range(len(trace)):
            writer.writerow(
                [
                    i + 1,
                    trace.song_ids[i],
                    repr(float(trace.ratings[i])),
                    repr(float(trace.true_u[i])),
                    repr(float(trace.best_u[i])),
                    repr(float(cum[i])),
                ]
            )


def read_run_song_ids(path: str | Path) -> list[str]:
    """Song-id column of a run CSV written by write_run_csv."""
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "song_id" not in reader.fieldnames:
            raise ValueError(f"{path}: not a run CSV (no song_id column)")
        return [row["song_id"] for row in reader]


def write_regret_csv(result: ComparisonResult, path: str | Path) -> None:
    """Aggregate regret: step,policy,mean,stderr over the seeds."""
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "policy", "mean_regret", "stderr"])
        for kind in result.policies:
            curves = result.regret_curves[kind]
            mean = curves.mean(axis=0)
            stderr = curves.std(axis=0, ddof=1) / np.sqrt(curves.shape[0]) if curves.shape[0] > 1 else np.zeros_like(mean)
            for step in range(curves.shape[1]):
                writer.writerow([step + 1, kind, repr(float(mean[step])), repr(float(stderr[step]))])


def summarize(result: ComparisonResult) -> dict:
    """Final-regret summary plus one-sided paired p-values for each pair."""
    summary: dict = {"policies": {}, "paired_pvalues": {}}
    for kind in result.policies:
        final = result.final_regret(kind)
        summary["policies"][kind] = {
            "final_regret_mean": float(final.mean()),
            "final_regret_sd": float(final.std(ddof=1)) if len(final) > 1 else 0.0,
            "per_seed": [float(v) for v in final],
        }
    if len(result.seeds) > 1:
        for a in result.policies:
            for b in result.policies:
                if a != b:
                    summary["paired_pvalues"][f"{a}<{b}"] = paired_pvalue(
                        result.final_regret(a), result.final_regret(b), alternative="less"
                    )
    return summary


def write_summary_json(result: ComparisonResult, path: str | Path) -> None:
    Path(path).write_text(json.dumps(summarize(result), indent=2))


def plot_regret(result: ComparisonResult, path: str | Path) -> None:
    """Mean cumulative regret per policy with a +/-1 stderr band."""
    fig, ax = plt.subplots()
    steps = np.arange(1, next(iter(result.regret_curves.values())).shape[1] + 1)
    for kind in result.policies:
        curves = result.regret_curves[kind]
        mean = curves.mean(axis=0)
        ax.plot(steps, mean, label=_label(kind))
        if curves.shape[0] > 1:
            stderr = curves.std(axis=0, ddof=1) / np.sqrt(curves.shape[0])
            ax.fill_between(steps, mean - stderr, mean + stderr, alpha=0.2)
    ax.set_xlabel("recommendation")
    ax.set_ylabel("cumulative regret")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_zipf(fits: dict[str, ZipfFit], path: str | Path) -> None:
    """Log-log rank/frequency scatter with the fitted line per policy."""
    fig, ax = plt.subplots()
    for kind, fit in fits.items():
        ax.loglog(fit.ranks, fit.freqs, "o", ms=3, alpha=0.6, label=f"{_label(kind)} (slope {fit.slope:.2f})")
        if not fit.degenerate:
            lx = np.log(fit.ranks)
            inter = np.mean(np.log(fit.freqs)) - fit.slope * np.mean(lx)
            ax.loglog(fit.ranks, np.exp(inter + fit.slope * lx), "-", lw=1)
    ax.set_xlabel("rank")
    ax.set_ylabel("play count")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_scree(model, path: str | Path) -> None:
    """Cumulative explained variance against component count."""
    fig, ax = plt.subplots()
    k = np.arange(1, model.n_components + 1)
    ax.plot(k, np.cumsum(model.explained_variance_ratio), "o-")
    ax.set_xlabel("components kept")
    ax.set_ylabel("cumulative explained variance")
    ax.set_ylim(0, 1.02)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_uncertainty(series: dict[str, np.ndarray], path: str | Path) -> None:
    """Posterior-uncertainty trajectories (mean predictive sd vs ratings seen)."""
    fig, ax = plt.subplots()
    for kind, values in series.items():
        ax.plot(np.arange(1, len(values) + 1), values, label=_label(kind))
    ax.set_xlabel("ratings observed")
    ax.set_ylabel("mean posterior sd of expected rating")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
