"""Declarative experiment runner: config files in, artifact directories out.

A run trains one model, then evaluates it on the uniform grid, scans its
loss landscape, and histograms its weights, writing every artifact (CSV/JSON
plus the binary parameter file) into one self-describing directory.  A
matrix executes a list of runs -- by default the full study grid of nine
1-D runs (omega 5/10/15 x three objectives) plus the three 2-D runs -- and
consolidates their relative L2 errors into one table.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import analysis
from .network import DivergenceError, FieldNetwork, MLPConfig, save_params, save_params_csv
from .problems import Problem, make_problem, sample_batch
from .training import ObjectiveKind, TrainConfig, loss_value, train

_COMMON_DEFAULTS = {
    "omega": 5,
    "network": {"hidden_layers": 8, "hidden_width": 20},
    "n_domain": 600,
    "resample_every_epoch": None,  # None = fresh points per epoch for pinn/pecann
    "seeds": {"init": 7001, "sample": 7002, "landscape": 7003},
    "optimizer": {"lr": 1e-2, "beta1": 0.9, "beta2": 0.999, "epsilon": 1e-8},
    "scheduler": {"patience": 100, "factor": 0.90, "threshold": 1e-4, "min_lr": 1e-4},
    "alm": {"mu0": 1.0, "growth": 2.0, "mu_max": 500.0},
    "landscape": {"half_range": 1.0, "resolution": 51},
    "histogram_bins": 81,
    "out_dir": None,
}

_PER_PROBLEM_DEFAULTS = {
    "poisson1d": {"n_boundary": 2, "epochs": 30000, "grid_resolution": 1001},
    "poisson2d": {"n_boundary": 600, "epochs": 50000, "grid_resolution": 201},
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Fully resolved settings for one run; serializes canonically to JSON."""

    problem: str
    objective: str
    omega: int = 5
    hidden_layers: int = 8
    hidden_width: int = 20
    n_domain: int = 600
    n_boundary: int = 2
    epochs: int = 30000
    # None resolves by objective: the physics losses draw a fresh batch
    # every epoch, the data fit trains on one fixed dataset
    resample_every_epoch: bool | None = None
    init_seed: int = 7001
    sample_seed: int = 7002
    landscape_seed: int = 7003
    lr: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    patience: int = 100
    factor: float = 0.90
    threshold: float = 1e-4
    min_lr: float = 1e-4
    mu0: float = 1.0
    growth: float = 2.0
    mu_max: float = 500.0
    landscape_half_range: float = 1.0
    landscape_resolution: int = 51
    grid_resolution: int = 1001
    histogram_bins: int = 81
    out_dir: str | None = None

    def __post_init__(self):
        if self.problem not in _PER_PROBLEM_DEFAULTS:
            raise ValueError(f"unknown problem {self.problem!r}")
        kind = ObjectiveKind(self.objective)  # validates
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.resample_every_epoch is None:
            object.__setattr__(self, "resample_every_epoch",
                               kind is not ObjectiveKind.SUPERVISED)

    # -- JSON form ------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "problem": self.problem,
            "omega": self.omega,
            "objective": self.objective,
            "network": {"hidden_layers": self.hidden_layers,
                        "hidden_width": self.hidden_width},
            "n_domain": self.n_domain,
            "n_boundary": self.n_boundary,
            "epochs": self.epochs,
            "resample_every_epoch": self.resample_every_epoch,
            "seeds": {"init": self.init_seed, "sample": self.sample_seed,
                      "landscape": self.landscape_seed},
            "optimizer": {"lr": self.lr, "beta1": self.beta1, "beta2": self.beta2,
                          "epsilon": self.epsilon},
            "scheduler": {"patience": self.patience, "factor": self.factor,
                          "threshold": self.threshold, "min_lr": self.min_lr},
            "alm": {"mu0": self.mu0, "growth": self.growth, "mu_max": self.mu_max},
            "landscape": {"half_range": self.landscape_half_range,
                          "resolution": self.landscape_resolution},
            "grid_resolution": self.grid_resolution,
            "histogram_bins": self.histogram_bins,
            "out_dir": self.out_dir,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        """Build a config from a possibly partial dict; defaults fill the rest."""
        if "problem" not in data:
            raise ValueError("config needs a 'problem' entry")
        if "objective" not in data:
            raise ValueError("config needs an 'objective' entry")
        problem = data["problem"]
        if problem not in _PER_PROBLEM_DEFAULTS:
            raise ValueError(f"unknown problem {problem!r}")
        merged = _deep_merge(_COMMON_DEFAULTS, _PER_PROBLEM_DEFAULTS[problem])
        merged = _deep_merge(merged, data)

        known = set(_COMMON_DEFAULTS) | set(_PER_PROBLEM_DEFAULTS[problem]) | {
            "problem", "objective"}
        unknown = set(merged) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        for group in ("network", "seeds", "optimizer", "scheduler", "alm", "landscape"):
            bad = set(merged[group]) - set(_COMMON_DEFAULTS[group])
            if bad:
                raise ValueError(f"unknown keys under {group!r}: {sorted(bad)}")

        return cls(
            problem=merged["problem"],
            objective=merged["objective"],
            omega=int(merged["omega"]),
            hidden_layers=int(merged["network"]["hidden_layers"]),
            hidden_width=int(merged["network"]["hidden_width"]),
            n_domain=int(merged["n_domain"]),
            n_boundary=int(merged["n_boundary"]),
            epochs=int(merged["epochs"]),
            resample_every_epoch=(None if merged["resample_every_epoch"] is None
                                  else bool(merged["resample_every_epoch"])),
            init_seed=int(merged["seeds"]["init"]),
            sample_seed=int(merged["seeds"]["sample"]),
            landscape_seed=int(merged["seeds"]["landscape"]),
            lr=float(merged["optimizer"]["lr"]),
            beta1=float(merged["optimizer"]["beta1"]),
            beta2=float(merged["optimizer"]["beta2"]),
            epsilon=float(merged["optimizer"]["epsilon"]),
            patience=int(merged["scheduler"]["patience"]),
            factor=float(merged["scheduler"]["factor"]),
            threshold=float(merged["scheduler"]["threshold"]),
            min_lr=float(merged["scheduler"]["min_lr"]),
            mu0=float(merged["alm"]["mu0"]),
            growth=float(merged["alm"]["growth"]),
            mu_max=float(merged["alm"]["mu_max"]),
            landscape_half_range=float(merged["landscape"]["half_range"]),
            landscape_resolution=int(merged["landscape"]["resolution"]),
            grid_resolution=int(merged["grid_resolution"]),
            histogram_bins=int(merged["histogram_bins"]),
            out_dir=merged["out_dir"],
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def loads(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.loads(Path(path).read_text())

    # -- derived objects ------------------------------------------------

    def build_problem(self) -> Problem:
        return make_problem(self.problem, self.omega)

    def train_config(self) -> TrainConfig:
        input_dim = 1 if self.problem == "poisson1d" else 2
        return TrainConfig(
            network=MLPConfig(input_dim=input_dim, hidden_layers=self.hidden_layers,
                              hidden_width=self.hidden_width),
            epochs=self.epochs,
            n_domain=self.n_domain,
            n_boundary=self.n_boundary,
            init_seed=self.init_seed,
            sample_seed=self.sample_seed,
            resample_every_epoch=self.resample_every_epoch,
            lr=self.lr, beta1=self.beta1, beta2=self.beta2, epsilon=self.epsilon,
            patience=self.patience, factor=self.factor, threshold=self.threshold,
            min_lr=self.min_lr,
            mu0=self.mu0, growth=self.growth, mu_max=self.mu_max,
        )

    def with_seed(self, seed: int) -> "ExperimentConfig":
        """All three seeds forced to one value (smoke-test override)."""
        return replace(self, init_seed=seed, sample_seed=seed, landscape_seed=seed)


def _deep_merge(base: dict, overlay: dict) -> dict:
    out = dict(base)
    for key, value in overlay.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = value
    return out


# ----------------------------------------------------------------------
# single run

@dataclass(frozen=True)
class RunOutcome:
    out_dir: Path
    status: str  # "converged" or "diverged"
    summary: dict


def _decision_metadata(config: ExperimentConfig) -> dict:
    """Values of every convention the numbers depend on, for reproducibility."""
    return {
        "dtype": "float64",
        "weight_init": "glorot_uniform",
        "bias_init": "zeros",
        "parameter_layout": "per layer: row-major weight matrix, then bias vector",
        "derivative_engine": "exact layerwise propagation of (u, du, d2u) "
                             "with reverse-mode parameter accumulation",
        "sampling": "uniform over the open interior; 2-D boundary faces round-robin",
        "batch_policy": ("resampled_every_epoch" if config.resample_every_epoch
                         else "fixed"),
        "diagnostics_batch": "first draw of the sample seed",
        "gradient_batching": "full batch",
        "adam": {"beta1": config.beta1, "beta2": config.beta2,
                 "epsilon": config.epsilon, "initial_lr": config.lr},
        "scheduler": {"patience": config.patience, "factor": config.factor,
                      "threshold": config.threshold, "min_lr": config.min_lr,
                      "monitors": "total training loss"},
        "pecann": {"domain_term": "unnormalized residual sum",
                   "penalty_term": "0.5*mu*sum(C)",
                   "multiplier_update": "lambda += mu*C, once per epoch after "
                                        "the optimizer step",
                   "penalty_schedule": "mu doubled when mean constraint fails a "
                                       "4x shrink, clamped at mu_max",
                   "mu0": config.mu0, "growth": config.growth,
                   "mu_max": config.mu_max},
        "landscape_normalization": "filter (per-neuron weight row + bias)",
        "histogram_bins": config.histogram_bins,
    }


def run(config: ExperimentConfig, out_dir=None) -> RunOutcome:
    """Train per config, diagnose, and write all artifacts under out_dir.

    Produces: config.json, metadata.json, params.bin/params.csv, record.csv,
    prediction.csv, landscape.csv/landscape.json, histograms.csv,
    histogram_summary.csv, summary.json, and (pecann) alm.json.
    """
    if out_dir is None:
        out_dir = config.out_dir
    if out_dir is None:
        raise ValueError("no output directory: pass out_dir or set config.out_dir")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    config = replace(config, out_dir=str(out))

    problem = config.build_problem()
    tcfg = config.train_config()
    kind = ObjectiveKind(config.objective)
    network = FieldNetwork(tcfg.network)

    result = train(problem, kind, tcfg)

    # Post-training diagnostics always use the seed's first draw, so a
    # landscape rescan from the saved seed reproduces them bit for bit even
    # when training itself wandered through fresh batches.
    diag_batch = result.batch
    if tcfg.resample_every_epoch:
        diag_batch = sample_batch(problem, tcfg.n_domain, tcfg.n_boundary,
                                  tcfg.sample_seed)

    (out / "config.json").write_text(config.dumps())
    save_params(out / "params.bin", tcfg.network, result.params)
    save_params_csv(out / "params.csv", result.params)
    result.record.to_csv(out / "record.csv")
    if result.alm is not None:
        alm_doc = {"lambda": [float(v) for v in result.alm.lam],
                   "mu": result.alm.mu, "mu_max": result.alm.mu_max,
                   "growth": result.alm.growth}
        (out / "alm.json").write_text(json.dumps(alm_doc, indent=2, sort_keys=True) + "\n")

    evaluation = analysis.evaluate_model(network, result.params, problem,
                                         config.grid_resolution)
    analysis.export_prediction(evaluation, out / "prediction.csv")

    def landscape_loss(p):
        try:
            return loss_value(network, p, kind, diag_batch, problem, result.alm)
        except DivergenceError:
            return np.inf

    grid = analysis.scan_landscape(network, result.params, landscape_loss,
                                   seed=config.landscape_seed,
                                   half_range=config.landscape_half_range,
                                   resolution=config.landscape_resolution)
    analysis.export_landscape(grid, out / "landscape.csv", out / "landscape.json")

    histograms = analysis.weight_histograms(result.params, tcfg.network,
                                            bins=config.histogram_bins)
    analysis.export_histograms(histograms, out / "histograms.csv",
                               out / "histogram_summary.csv")

    final_losses = _final_losses(network, result, kind, diag_batch, problem)
    summary = {
        "problem": config.problem,
        "omega": config.omega if config.problem == "poisson1d" else None,
        "objective": config.objective,
        "relative_l2": _finite_or_none(evaluation.relative_l2),
        "diverged": result.record.diverged,
        "epochs_completed": len(result.record),
        "final_total_loss": final_losses[0],
        "final_domain_loss": final_losses[1],
        "final_boundary_loss": final_losses[2],
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")

    metadata = {
        "config": config.to_dict(),
        "decisions": _decision_metadata(config),
        "parameter_count": network.n_params,
        "wall_time_seconds": result.record.wall_time,
        "package": {"name": "ecl", "version": "0.1.0"},
    }
    (out / "metadata.json").write_text(json.dumps(metadata, indent=2, sort_keys=True) + "\n")

    status = "diverged" if result.record.diverged else "converged"
    return RunOutcome(out_dir=out, status=status, summary=summary)


def _final_losses(network, result, kind, batch, problem):
    from .training import build_objective

    try:
        obj = build_objective(kind, batch, problem, result.alm)
        total, parts = network.objective_value_terms(result.params, obj)
        return (_finite_or_none(total), _finite_or_none(parts[0]),
                _finite_or_none(parts[1]))
    except DivergenceError:
        return (None, None, None)


def _finite_or_none(x):
    x = float(x)
    return x if np.isfinite(x) else None


# ----------------------------------------------------------------------
# run matrices

def default_matrix() -> list[dict]:
    """The full study grid: 9 one-dimensional runs plus 3 two-dimensional runs.

    Two rows carry their own training budget.  The omega=5 pecann run anneals
    to a deeper lr floor: its optimization finishes early and the remaining
    epochs polish away resampling jitter, whereas on harder problems the
    default floor is what keeps the learning rate warm enough to descend at
    all (annealing to 1e-5 mid-descent strands omega=15 at relative L2 ~ 10).
    The 2-D pecann run is still descending steadily at the per-problem
    default budget, so it trains twice as long.
    """
    entries = []
    for omega in (5, 10, 15):
        for objective in ("supervised", "pinn", "pecann"):
            entry = {"problem": "poisson1d", "omega": omega,
                     "objective": objective}
            if objective == "pecann" and omega == 5:
                entry["scheduler"] = {"min_lr": 1e-5}
            entries.append(entry)
    for objective in ("supervised", "pinn", "pecann"):
        entry = {"problem": "poisson2d", "objective": objective}
        if objective == "pecann":
            entry["epochs"] = 100000
        entries.append(entry)
    return entries


def load_matrix_file(path) -> list[dict]:
    """Parse a matrix file: a bare list, or {'defaults': ..., 'runs': [...]}.

    ``"runs": "default"`` expands to the built-in study grid; a ``defaults``
    dict is overlaid under every entry (handy for short smoke runs).
    """
    doc = json.loads(Path(path).read_text())
    if isinstance(doc, list):
        return [dict(e) for e in doc]
    if not isinstance(doc, dict) or "runs" not in doc:
        raise ValueError(f"{path}: expected a list or an object with a 'runs' key")
    runs = doc["runs"]
    if runs == "default":
        runs = default_matrix()
    if not isinstance(runs, list):
        raise ValueError(f"{path}: 'runs' must be a list or the string 'default'")
    defaults = doc.get("defaults", {})
    return [_deep_merge(defaults, dict(e)) for e in runs]


def _entry_name(entry: dict) -> str:
    if "name" in entry:
        return str(entry["name"])
    bits = [entry.get("problem", "problem")]
    if entry.get("problem") == "poisson1d":
        bits.append(f"omega{entry.get('omega', 5)}")
    bits.append(entry.get("objective", "objective"))
    return "_".join(bits)


def _matrix_worker(args):
    index, entry, out_dir = args
    entry = {k: v for k, v in entry.items() if k != "name"}
    try:
        config = ExperimentConfig.from_dict(entry)
        outcome = run(config, out_dir)
        return index, {"status": outcome.status, **outcome.summary}
    except Exception as exc:  # per-row failure: record and keep the batch going
        return index, {"status": "error", "error": f"{type(exc).__name__}: {exc}",
                       "problem": entry.get("problem"), "omega": entry.get("omega"),
                       "objective": entry.get("objective"), "relative_l2": None,
                       "diverged": None}


MATRIX_SUMMARY_COLUMNS = ["problem", "omega", "objective", "relative_l2",
                          "diverged", "status"]


def run_matrix(entries: list[dict], out_root, jobs: int = 1) -> list[dict]:
    """Execute every entry, then write matrix_summary.csv in matrix order.

    Row failures are recorded with status 'error' and do not stop the batch.
    Rows contain only config-derived fields, so identical entries yield
    identical rows no matter where their artifacts land; the directory of
    each run is listed in matrix_manifest.json.
    """
    out_root = Path(out_root)
    out_root.mkdir(parents=True, exist_ok=True)

    names, seen = [], {}
    for entry in entries:
        base = _entry_name(entry)
        seen[base] = seen.get(base, 0) + 1
        names.append(base if seen[base] == 1 else f"{base}_{seen[base]}")

    tasks = [(i, entry, str(out_root / name))
             for i, (entry, name) in enumerate(zip(entries, names))]
    rows: list[dict | None] = [None] * len(tasks)
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for index, row in pool.map(_matrix_worker, tasks):
                rows[index] = row
    else:
        for task in tasks:
            index, row = _matrix_worker(task)
            rows[index] = row

    with open(out_root / "matrix_summary.csv", "w") as fh:
        fh.write(",".join(MATRIX_SUMMARY_COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join(_csv_cell(row.get(col)) for col in MATRIX_SUMMARY_COLUMNS)
                     + "\n")
    manifest = {
        "runs": [{"index": i, "name": name, "dir": str(out_root / name),
                  "status": rows[i]["status"]}
                 for i, name in enumerate(names)],
    }
    (out_root / "matrix_manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return rows


def _csv_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)
