"""Command-line interface: simulate, compare, analyze-zipf, fit-pca, serve."""

from __future__ import annotations

import json
from dataclasses import replace
from pathlib import Path

import click
import numpy as np

from . import reports
from .catalog import fit_pca, load_catalog, reduce_catalog, save_catalog
from .config import ExperimentConfig, dump_config, load_config
from .simulate import run_comparison, synthetic_catalog, zipf_analysis


def _load_experiment(config: str | None, seed: int | None) -> ExperimentConfig:
    cfg = load_config(config) if config else ExperimentConfig()
    if seed is not None:
        cfg = replace(cfg, master_seed=seed)
    return cfg


def _ensure_out(out_dir: str) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


@click.group()
def main() -> None:
    """Bayesian bandit music recommendation toolkit."""


@main.command()
@click.option("--config", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--out-dir", default="out", show_default=True)
@click.option("--seed", type=int, default=None, help="override the config master seed")
def simulate(config: str | None, out_dir: str, seed: int | None) -> None:
    """Run the configured policies and write per-run traces plus figures."""
    cfg = _load_experiment(config, seed)
    out = _ensure_out(out_dir)
    result = run_comparison(cfg, log=click.echo)
    for kind in result.policies:
        for si, s in enumerate(result.seeds):
            reports.write_run_csv(result.traces[kind][si], out / f"run-{kind}-seed{s}.csv")
    reports.write_summary_json(result, out / "summary.json")
    reports.plot_regret(result, out / "regret.png")
    dump_config(cfg, out / "config.json")
    click.echo(f"wrote {len(result.policies) * len(result.seeds)} run CSVs to {out}")


@main.command()
@click.option("--config", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--out-dir", default="out", show_default=True)
@click.option("--seed", type=int, default=None, help="override the config master seed")
def compare(config: str | None, out_dir: str, seed: int | None) -> None:
    """Aggregate regret comparison across policies with paired tests."""
    cfg = _load_experiment(config, seed)
    out = _ensure_out(out_dir)
    result = run_comparison(cfg, log=click.echo)
    reports.write_regret_csv(result, out / "regret.csv")
    reports.write_summary_json(result, out / "summary.json")
    reports.plot_regret(result, out / "regret.png")
    summary = reports.summarize(result)
    click.echo(f"{'policy':<18} {'final regret':>14}")
    for kind, row in summary["policies"].items():
        click.echo(f"{kind:<18} {row['final_regret_mean']:>9.2f} +/- {row['final_regret_sd']:.2f}")
    click.echo(f"aggregate outputs in {out}")


@main.command("analyze-zipf")
@click.argument("run_csvs", nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out-dir", default="out", show_default=True)
def analyze_zipf(run_csvs: tuple[str, ...], out_dir: str) -> None:
    """Rank/frequency analysis of play traces written by `simulate`."""
    out = _ensure_out(out_dir)
    fits = {}
    rows = {}
    for path in run_csvs:
        name = Path(path).stem
        fit = zipf_analysis(reports.read_run_song_ids(path))
        fits[name] = fit
        rows[name] = {
            "slope": fit.slope,
            "r_squared": fit.r_squared,
            "n_points": fit.n_points,
            "degenerate": fit.degenerate,
        }
        click.echo(f"{name}: slope={fit.slope:.3f} R2={fit.r_squared:.3f} points={fit.n_points}")
    (out / "zipf.json").write_text(json.dumps(rows, indent=2))
    reports.plot_zipf(fits, out / "zipf.png")
    with (out / "zipf.csv").open("w") as fh:
        fh.write("trace,rank,freq\n")
        for name, fit in fits.items():
            for rank, freq in zip(fit.ranks, fit.freqs):
                fh.write(f"{name},{int(rank)},{int(freq)}\n")
    click.echo(f"zipf outputs in {out}")


@main.command("fit-pca")
@click.option("--features", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--variance-target", type=float, default=0.95, show_default=True)
@click.option("--out-dir", default="out", show_default=True)
def fit_pca_cmd(features: str, variance_target: float, out_dir: str) -> None:
    """Fit PCA to a catalog CSV and write the model plus reduced catalog."""
    out = _ensure_out(out_dir)
    catalog = load_catalog(features)
    data = np.stack([s.raw for s in catalog.songs])
    model = fit_pca(data, variance_target)
    model.to_json(out / "pca_model.json")
    reduced = reduce_catalog(catalog, model)
    save_catalog(reduced, out / "catalog_reduced.csv", which="reduced")
    reports.plot_scree(model, out / "scree.png")
    click.echo(
        f"kept {model.n_components} components "
        f"({model.explained_variance_ratio.sum():.3f} of variance) -> {out}"
    )


@main.command()
@click.option("--config", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--out-dir", default=None, help="directory for session snapshots")
@click.option("--seed", type=int, default=None)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
@click.option(
    "--ui",
    type=click.Path(exists=True, file_okay=False),
    default=None,
    help="directory of web UI files to serve at /",
)
def serve(
    config: str | None, out_dir: str | None, seed: int | None, host: str, port: int, ui: str | None
) -> None:
    """Run the HTTP rating service."""
    import uvicorn

    from .novelty import NoveltyKnots
    from .policies import PolicyConfig
    from .service import ServiceConfig, create_app

    cfg = _load_experiment(config, seed)
    if cfg.catalog_path is not None:
        catalog = load_catalog(cfg.catalog_path)
    else:
        catalog = synthetic_catalog(cfg.n_songs, cfg.p, seed=cfg.master_seed)
    knots = NoveltyKnots(cfg.knots) if cfg.knots is not None else NoveltyKnots.default()
    pcfg = PolicyConfig(
        knots=knots,
        n_samples=cfg.n_samples,
        mcmc_n_samples=cfg.mcmc_n_samples,
        mcmc_burn_in=cfg.mcmc_burn_in,
        linucb_lambda=cfg.linucb_lambda,
        linucb_alpha=cfg.linucb_alpha,
        never_played_minutes=cfg.never_played_minutes,
        seed=cfg.master_seed,
    )
    scfg = ServiceConfig(
        policy_config=pcfg,
        data_dir=Path(out_dir) if out_dir else None,
    )
    app = create_app(catalog, scfg, static_dir=ui)
    click.echo(f"serving {len(catalog)} songs on http://{host}:{port}")
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
