"""Command-line entry points: train one run, rescan a landscape, run a matrix.

Exit status of ``train``: 0 converged, 3 diverged, 1 runtime error, 2 usage
error.  ``matrix`` finishes every row regardless of failures and exits 1 if
any row errored, 3 if any diverged, else 0.  Setting ``ECL_SEED`` forces all
seeds (init, sample, landscape) to one value, for cheap smoke runs.
"""

from __future__ import annotations

import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import click
import numpy as np

from . import analysis
from .experiment import (ExperimentConfig, _deep_merge, default_matrix,
                         load_matrix_file, run, run_matrix)
from .network import DivergenceError, FieldNetwork, load_params
from .problems import sample_batch
from .training import AlmState, ObjectiveKind, loss_value


def _env_seed() -> int | None:
    raw = os.environ.get("ECL_SEED")
    if raw is None:
        return None
    try:
        return int(raw)
    except ValueError:
        raise click.UsageError(f"ECL_SEED must be an integer, got {raw!r}")


def _load_config(path) -> ExperimentConfig:
    try:
        config = ExperimentConfig.load(path)
    except (ValueError, KeyError, TypeError, json.JSONDecodeError) as exc:
        raise click.UsageError(f"{path}: {exc}")
    seed = _env_seed()
    return config if seed is None else config.with_seed(seed)


@click.group()
def main():
    """Train small tanh networks on elliptic problems and diagnose them."""


@main.command()
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False), help="Run config JSON.")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False),
              help="Artifact directory (created if missing).")
def train(config_path, out_dir):
    """Train one model and write its full artifact directory."""
    config = _load_config(config_path)
    outcome = run(config, out_dir)
    l2 = outcome.summary["relative_l2"]
    click.echo(f"{outcome.status}  relative_l2={l2}  -> {outcome.out_dir}")
    if outcome.status == "diverged":
        sys.exit(3)


@main.command()
@click.option("--params", "params_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Saved parameter file (binary).")
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Config JSON of the run that produced the parameters.")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False),
              help="Directory for prediction.csv.")
def evaluate(params_path, config_path, out_dir):
    """Score saved parameters on the uniform grid and export the prediction."""
    config = _load_config(config_path)
    mlp_config, params = load_params(params_path)
    if mlp_config != config.train_config().network:
        raise click.UsageError("parameter file architecture does not match config")
    network = FieldNetwork(mlp_config)
    result = analysis.evaluate_model(network, params, config.build_problem(),
                                     config.grid_resolution)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    analysis.export_prediction(result, out / "prediction.csv")
    click.echo(f"relative_l2={result.relative_l2!r}  -> {out / 'prediction.csv'}")


@main.command()
@click.option("--params", "params_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Saved parameter file (binary); architecture read from its header.")
@click.option("--bins", type=int, default=81, show_default=True,
              help="Histogram bins per layer.")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False),
              help="Directory for histograms.csv and histogram_summary.csv.")
def histogram(params_path, bins, out_dir):
    """Histogram each layer's weights from a saved parameter file."""
    if bins < 1:
        raise click.UsageError("--bins must be >= 1")
    mlp_config, params = load_params(params_path)
    histograms = analysis.weight_histograms(params, mlp_config, bins=bins)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    analysis.export_histograms(histograms, out / "histograms.csv",
                               out / "histogram_summary.csv")
    click.echo(f"{len(histograms)} layers  -> {out / 'histograms.csv'}")


@main.command()
@click.option("--params", "params_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Saved parameter file (binary).")
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Config JSON of the run that produced the parameters.")
@click.option("--seed", type=int, default=None,
              help="Direction seed (default: the config's landscape seed).")
@click.option("--alm", "alm_path", type=click.Path(exists=True, dir_okay=False),
              default=None,
              help="Multiplier state JSON for pecann (default: alm.json "
                   "next to the parameter file).")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False),
              help="Directory for landscape.csv and landscape.json.")
def landscape(params_path, config_path, seed, alm_path, out_dir):
    """Scan the loss surface along two random directions around saved parameters."""
    config = _load_config(config_path)
    if seed is not None and _env_seed() is None:
        config = replace(config, landscape_seed=seed)

    mlp_config, params = load_params(params_path)
    expected = config.train_config().network
    if mlp_config != expected:
        raise click.UsageError(
            f"parameter file architecture {mlp_config} does not match config "
            f"architecture {expected}")

    network = FieldNetwork(mlp_config)
    problem = config.build_problem()
    kind = ObjectiveKind(config.objective)
    batch = sample_batch(problem, config.n_domain, config.n_boundary,
                         config.sample_seed)
    alm = None
    if kind is ObjectiveKind.PECANN:
        path = Path(alm_path) if alm_path else Path(params_path).parent / "alm.json"
        if not path.is_file():
            raise click.UsageError(
                f"pecann landscape needs multiplier state; {path} not found "
                "(pass --alm)")
        doc = json.loads(path.read_text())
        alm = AlmState(lam=np.asarray(doc["lambda"], dtype=np.float64),
                       mu=float(doc["mu"]),
                       mu_max=float(doc.get("mu_max", config.mu_max)),
                       growth=float(doc.get("growth", config.growth)))

    def loss_fn(p):
        try:
            return loss_value(network, p, kind, batch, problem, alm)
        except DivergenceError:
            return np.inf

    grid = analysis.scan_landscape(network, params, loss_fn,
                                   seed=config.landscape_seed,
                                   half_range=config.landscape_half_range,
                                   resolution=config.landscape_resolution)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    analysis.export_landscape(grid, out / "landscape.csv", out / "landscape.json")
    click.echo(f"center_loss={grid.center_loss}  -> {out / 'landscape.csv'}")


@main.command()
@click.option("--file", "file_path", type=click.Path(exists=True, dir_okay=False),
              default=None,
              help="Matrix JSON (default: the built-in 12-run study grid).")
@click.option("--out", "out_root", required=True, type=click.Path(file_okay=False),
              help="Root directory; each run gets a subdirectory.")
@click.option("--jobs", type=int, default=1, show_default=True,
              help="Worker processes for concurrent runs.")
def matrix(file_path, out_root, jobs):
    """Run a batch of experiments and consolidate their relative L2 errors."""
    if jobs < 1:
        raise click.UsageError("--jobs must be >= 1")
    try:
        entries = load_matrix_file(file_path) if file_path else default_matrix()
    except (ValueError, json.JSONDecodeError) as exc:
        raise click.UsageError(str(exc))
    seed = _env_seed()
    if seed is not None:
        overlay = {"seeds": {"init": seed, "sample": seed, "landscape": seed}}
        entries = [_deep_merge(entry, overlay) for entry in entries]

    rows = run_matrix(entries, out_root, jobs=jobs)
    for row in rows:
        label = row.get("problem")
        if row.get("omega") is not None:
            label = f"{label}(omega={row['omega']})"
        click.echo(f"{label} {row.get('objective')}: status={row['status']} "
                   f"relative_l2={row.get('relative_l2')}")
    statuses = {row["status"] for row in rows}
    if "error" in statuses:
        sys.exit(1)
    if "diverged" in statuses:
        sys.exit(3)


if __name__ == "__main__":
    main()
