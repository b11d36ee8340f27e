"""Post-training diagnostics: accuracy, loss landscapes, weight histograms."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .network import FieldNetwork, MLPConfig
from .problems import Problem, evaluation_grid

logger = logging.getLogger(__name__)


def relative_l2(predicted, exact) -> float:
    """||predicted - exact||_2 / ||exact||_2 over matching vectors."""
    predicted = np.asarray(predicted, dtype=np.float64)
    exact = np.asarray(exact, dtype=np.float64)
    if predicted.shape != exact.shape:
        raise ValueError("predicted and exact vectors must have equal length")
    denom = float(np.linalg.norm(exact))
    if denom == 0.0:
        raise ValueError("relative L2 is undefined for a zero-norm exact vector")
    return float(np.linalg.norm(predicted - exact)) / denom


@dataclass(frozen=True)
class EvaluationResult:
    points: np.ndarray
    predicted: np.ndarray
    exact: np.ndarray
    relative_l2: float


def evaluate_model(network: FieldNetwork, params, problem: Problem,
                   resolution: int | None = None) -> EvaluationResult:
    """Predicted and exact fields on the uniform grid, plus their relative L2."""
    points = evaluation_grid(problem, resolution)
    predicted = network.forward_batch(params, points)
    exact = problem.exact(points)
    return EvaluationResult(points=points, predicted=predicted, exact=exact,
                            relative_l2=relative_l2(predicted, exact))


# ----------------------------------------------------------------------
# loss landscape

@dataclass(frozen=True)
class LandscapeGrid:
    """Loss over a 2-D grid of perturbations around trained parameters."""

    alphas: np.ndarray
    betas: np.ndarray
    losses: np.ndarray
    center_loss: float
    direction_seed: int
    half_range: float
    normalization: str = "filter"


def filter_normalize(network: FieldNetwork, direction: np.ndarray,
                     params: np.ndarray) -> np.ndarray:
    """Rescale each neuron slice of ``direction`` to the norm of the same slice of ``params``.

    A slice is one neuron's incoming weight row together with its bias.
    Zero-norm parameter slices get a zeroed direction slice (logged), so the
    scan never amplifies dead neurons.
    """
    out = np.array(direction, dtype=np.float64)
    for idx in network.neuron_slices():
        ref = float(np.linalg.norm(params[idx]))
        cur = float(np.linalg.norm(out[idx]))
        if ref == 0.0:
            out[idx] = 0.0
            logger.warning("zero-norm parameter slice at indices %s..%s; "
                           "direction slice zeroed", idx[0], idx[-1])
        elif cur > 0.0:
            out[idx] *= ref / cur
    return out


def scan_landscape(network: FieldNetwork, params, loss_fn: Callable[[np.ndarray], float],
                   seed: int, half_range: float = 1.0, resolution: int = 51
                   ) -> LandscapeGrid:
    """Loss values at params + alpha*delta + beta*eta over a symmetric grid.

    delta and eta are seeded Gaussian directions, filter-normalized against
    the trained parameters.  The resolution must be odd so (0, 0) -- the
    unperturbed model -- sits exactly on the grid; the coordinates are built
    from integer multiples of one step, making the center coordinate exactly
    zero.
    """
    if resolution < 1 or resolution % 2 == 0:
        raise ValueError("resolution must be a positive odd number")
    params = np.asarray(params, dtype=np.float64)
    rng = np.random.default_rng(seed)
    delta = filter_normalize(network, rng.standard_normal(params.size), params)
    eta = filter_normalize(network, rng.standard_normal(params.size), params)

    half = resolution // 2
    step = half_range / half if half else 0.0
    alphas = (np.arange(resolution) - half) * step
    betas = alphas.copy()

    losses = np.empty((resolution, resolution))
    for i, a in enumerate(alphas):
        for j, b in enumerate(betas):
            losses[i, j] = loss_fn(params + a * delta + b * eta)
    return LandscapeGrid(alphas=alphas, betas=betas, losses=losses,
                         center_loss=float(losses[half, half]),
                         direction_seed=seed, half_range=half_range)


def export_landscape(grid: LandscapeGrid, csv_path, sidecar_path) -> None:
    """CSV of alpha,beta,loss rows plus a JSON sidecar describing the scan."""
    with open(csv_path, "w") as fh:
        fh.write("alpha,beta,loss\n")
        for i, a in enumerate(grid.alphas):
            for j, b in enumerate(grid.betas):
                fh.write(f"{repr(float(a))},{repr(float(b))},"
                         f"{repr(float(grid.losses[i, j]))}\n")
    sidecar = {
        "center_loss": _jsonable(grid.center_loss),
        "direction_seed": grid.direction_seed,
        "half_range": grid.half_range,
        "resolution": int(grid.alphas.size),
        "normalization": grid.normalization,
    }
    with open(sidecar_path, "w") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _jsonable(x: float):
    x = float(x)
    return x if np.isfinite(x) else repr(x)


# ----------------------------------------------------------------------
# weight histograms

@dataclass(frozen=True)
class LayerHistogram:
    """Histogram of one layer's weight matrix entries (biases excluded)."""

    layer_index: int
    bin_edges: np.ndarray
    counts: np.ndarray
    mean: float
    variance: float


def weight_histograms(params, config: MLPConfig, bins: int = 81) -> list[LayerHistogram]:
    """One histogram per affine layer, binned over that layer's own [min, max].

    Layer indices are 1-based, input side first; the last entry is the
    output layer.  Mean and variance are the population moments of the
    layer's weights.
    """
    network = FieldNetwork(config)
    params = np.asarray(params, dtype=np.float64)
    out = []
    for layer, wsl in enumerate(network.layer_weight_slices(), start=1):
        w = params[wsl]
        counts, edges = np.histogram(w, bins=bins)
        out.append(LayerHistogram(layer_index=layer, bin_edges=edges, counts=counts,
                                  mean=float(w.mean()), variance=float(w.var())))
    return out


def export_histograms(histograms: list[LayerHistogram], csv_path, summary_path) -> None:
    """Bin-level CSV (layer,bin_left,bin_right,count) and a per-layer summary CSV."""
    with open(csv_path, "w") as fh:
        fh.write("layer,bin_left,bin_right,count\n")
        for h in histograms:
            for k in range(h.counts.size):
                fh.write(f"{h.layer_index},{repr(float(h.bin_edges[k]))},"
                         f"{repr(float(h.bin_edges[k + 1]))},{int(h.counts[k])}\n")
    with open(summary_path, "w") as fh:
        fh.write("layer,mean,variance\n")
        for h in histograms:
            fh.write(f"{h.layer_index},{repr(h.mean)},{repr(h.variance)}\n")


def export_prediction(result: EvaluationResult, path) -> None:
    """CSV of the evaluation grid: x[,y],u_pred,u_exact."""
    dim = result.points.shape[1]
    header = "x,u_pred,u_exact" if dim == 1 else "x,y,u_pred,u_exact"
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for p, up, ue in zip(result.points, result.predicted, result.exact):
            coords = ",".join(repr(float(c)) for c in p)
            fh.write(f"{coords},{repr(float(up))},{repr(float(ue))}\n")
