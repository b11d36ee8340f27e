"""Readers for the CSV/JSON artifacts written by the ecl package.

Each reader checks the documented header before touching any data and
raises :class:`SchemaError` naming the offending column, so a renderer
pointed at the wrong file fails with a message about the file, not a
traceback from the middle of matplotlib.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class SchemaError(ValueError):
    """An artifact file does not match its documented schema."""


def _read_columns(path, expected: list[str]) -> dict[str, list[str]]:
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, expected columns {expected}")
        for col in expected:
            if col not in header:
                raise SchemaError(f"{path}: missing column {col!r} "
                                  f"(found {header})")
        for col in header:
            if col not in expected:
                raise SchemaError(f"{path}: unexpected column {col!r} "
                                  f"(expected {expected})")
        if header != expected:
            raise SchemaError(f"{path}: columns out of order {header}, "
                              f"expected {expected}")
        rows = list(reader)
    out: dict[str, list[str]] = {c: [] for c in expected}
    for lineno, row in enumerate(rows, start=2):
        if len(row) != len(expected):
            raise SchemaError(f"{path}:{lineno}: {len(row)} fields, "
                              f"expected {len(expected)}")
        for c, v in zip(expected, row):
            out[c].append(v)
    return out


def _floats(path, column: str, raw: list[str]) -> np.ndarray:
    try:
        return np.array([float(v) for v in raw], dtype=np.float64)
    except ValueError as exc:
        raise SchemaError(f"{path}: column {column!r} is not numeric: {exc}")


@dataclass(frozen=True)
class Prediction:
    """One evaluation grid: coordinates plus predicted and exact values."""

    points: np.ndarray
    predicted: np.ndarray
    exact: np.ndarray

    @property
    def dim(self) -> int:
        return self.points.shape[1]


def read_prediction(path) -> Prediction:
    """Parse ``prediction.csv`` (``x[,y],u_pred,u_exact``)."""
    with open(path, newline="") as fh:
        header = fh.readline().strip().split(",")
    if header[:1] == ["x"] and "y" not in header:
        cols = _read_columns(path, ["x", "u_pred", "u_exact"])
        points = _floats(path, "x", cols["x"])[:, None]
    else:
        cols = _read_columns(path, ["x", "y", "u_pred", "u_exact"])
        points = np.column_stack([_floats(path, "x", cols["x"]),
                                  _floats(path, "y", cols["y"])])
    return Prediction(points=points,
                      predicted=_floats(path, "u_pred", cols["u_pred"]),
                      exact=_floats(path, "u_exact", cols["u_exact"]))


@dataclass(frozen=True)
class Landscape:
    """A scanned loss grid with its sidecar metadata."""

    alphas: np.ndarray
    betas: np.ndarray
    losses: np.ndarray  # shape (len(alphas), len(betas)), alpha-major
    center_loss: float
    sidecar: dict


def read_landscape(csv_path, sidecar_path) -> Landscape:
    """Parse ``landscape.csv`` plus its JSON sidecar into a dense grid."""
    cols = _read_columns(csv_path, ["alpha", "beta", "loss"])
    alpha = _floats(csv_path, "alpha", cols["alpha"])
    beta = _floats(csv_path, "beta", cols["beta"])
    loss = _floats(csv_path, "loss", cols["loss"])

    sidecar = json.loads(Path(sidecar_path).read_text())
    for key in ("center_loss", "resolution", "direction_seed"):
        if key not in sidecar:
            raise SchemaError(f"{sidecar_path}: missing key {key!r}")
    res = int(sidecar["resolution"])
    if alpha.size != res * res:
        raise SchemaError(f"{csv_path}: {alpha.size} rows, sidecar says "
                          f"{res}x{res}")
    alphas = alpha.reshape(res, res)[:, 0]
    betas = beta.reshape(res, res)[0, :]
    if not (np.all(alpha.reshape(res, res) == alphas[:, None])
            and np.all(beta.reshape(res, res) == betas[None, :])):
        raise SchemaError(f"{csv_path}: rows are not in alpha-major order")
    center = sidecar["center_loss"]
    center = float(center)  # non-finite values arrive as strings
    return Landscape(alphas=alphas, betas=betas,
                     losses=loss.reshape(res, res),
                     center_loss=center, sidecar=sidecar)


@dataclass(frozen=True)
class LayerBins:
    layer: int
    edges: np.ndarray  # length counts.size + 1
    counts: np.ndarray
    mean: float
    variance: float


def read_histograms(csv_path, summary_path) -> list[LayerBins]:
    """Parse the per-bin histogram CSV and the per-layer moment summary."""
    cols = _read_columns(csv_path, ["layer", "bin_left", "bin_right", "count"])
    layers = _floats(csv_path, "layer", cols["layer"]).astype(int)
    left = _floats(csv_path, "bin_left", cols["bin_left"])
    right = _floats(csv_path, "bin_right", cols["bin_right"])
    counts = _floats(csv_path, "count", cols["count"]).astype(int)

    scols = _read_columns(summary_path, ["layer", "mean", "variance"])
    moments = {int(l): (m, v) for l, m, v in
               zip(_floats(summary_path, "layer", scols["layer"]).astype(int),
                   _floats(summary_path, "mean", scols["mean"]),
                   _floats(summary_path, "variance", scols["variance"]))}

    out = []
    for layer in sorted(set(layers.tolist())):
        mask = layers == layer
        if layer not in moments:
            raise SchemaError(f"{summary_path}: missing layer {layer} "
                              f"present in {csv_path}")
        edges = np.append(left[mask], right[mask][-1])
        if not np.allclose(edges[1:-1], right[mask][:-1]):
            raise SchemaError(f"{csv_path}: layer {layer} bins are not "
                              f"contiguous")
        mean, var = moments[layer]
        out.append(LayerBins(layer=layer, edges=edges, counts=counts[mask],
                             mean=float(mean), variance=float(var)))
    return out


def read_summary(path) -> dict:
    """Parse ``summary.json``; requires the accuracy/outcome keys."""
    doc = json.loads(Path(path).read_text())
    if not isinstance(doc, dict):
        raise SchemaError(f"{path}: expected a JSON object")
    for key in ("problem", "objective", "relative_l2", "diverged"):
        if key not in doc:
            raise SchemaError(f"{path}: missing key {key!r}")
    return doc


def finite(values: np.ndarray) -> np.ndarray:
    """The finite entries of an array (landscape grids may contain inf)."""
    flat = np.asarray(values).ravel()
    return flat[np.isfinite(flat)]


def fmt(value) -> str:
    """Annotation text for a number read from an artifact.

    repr round-trips floats exactly, which keeps figure annotations equal
    to the artifact values they came from; None (a diverged run's L2)
    renders as a dash.
    """
    if value is None:
        return "—"
    value = float(value)
    if math.isnan(value):
        return "nan"
    return repr(value)
