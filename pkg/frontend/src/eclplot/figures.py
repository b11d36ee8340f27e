"""Figure construction from training artifacts.

Four figure kinds: 1-D prediction overlays, per-layer weight-histogram
grids, 3-D loss-landscape surfaces, and 2-D solution heatmaps.  Every
number drawn on a figure is read from an artifact — nothing is ever
recomputed here — and the annotation strings use exact float reprs, so a
figure can be checked against its source files character for character.
All rendering is deterministic for fixed inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import matplotlib

matplotlib.use("Agg")  # batch renderer: never touch a display

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .artifacts import (  # noqa: E402
    SchemaError,
    finite,
    fmt,
    read_histograms,
    read_landscape,
    read_prediction,
    read_summary,
)

KINDS = ("prediction_overlay", "histogram_grid", "landscape_surface", "heatmap")

#: grid ratio beyond which landscape coloring switches to log10 automatically
LOG_SCALE_RATIO = 1e3


@dataclass(frozen=True)
class FigureSpec:
    """One figure to render: a kind, its input artifacts, and an output path.

    Only the fields belonging to ``kind`` are consulted:

    - ``prediction_overlay``: ``panels`` — each with ``prediction``,
      optional ``summary`` and ``label``
    - ``histogram_grid``: ``histograms`` + ``histogram_summary``
    - ``landscape_surface``: ``landscape`` + ``sidecar`` and optional
      ``log_scale`` (None = automatic)
    - ``heatmap``: ``prediction`` (2-D) + optional ``summary``
    """

    kind: str
    out: str
    panels: tuple[dict, ...] = ()
    histograms: str | None = None
    histogram_summary: str | None = None
    landscape: str | None = None
    sidecar: str | None = None
    log_scale: bool | None = None
    prediction: str | None = None
    summary: str | None = None
    title: str | None = None

    _REQUIRED = {
        "prediction_overlay": ("panels",),
        "histogram_grid": ("histograms", "histogram_summary"),
        "landscape_surface": ("landscape", "sidecar"),
        "heatmap": ("prediction",),
    }

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}; "
                             f"expected one of {KINDS}")
        for name in self._REQUIRED[self.kind]:
            if not getattr(self, name):
                raise ValueError(f"{self.kind} spec needs {name!r}")
        if self.kind == "prediction_overlay":
            for i, panel in enumerate(self.panels):
                if "prediction" not in panel:
                    raise ValueError(f"panel {i} needs a 'prediction' path")

    @classmethod
    def from_dict(cls, doc: dict) -> "FigureSpec":
        known = {f.name for f in fields(cls) if not f.name.startswith("_")}
        bad = set(doc) - known
        if bad:
            raise ValueError(f"unknown figure-spec keys: {sorted(bad)}")
        doc = dict(doc)
        if "panels" in doc:
            doc["panels"] = tuple(dict(p) for p in doc["panels"])
        return cls(**doc)

    def resolved(self, base: Path) -> "FigureSpec":
        """Input paths resolved against ``base`` (the spec file's directory)."""

        def res(p):
            return None if p is None else str((base / p))

        return replace(
            self,
            panels=tuple({**p, "prediction": res(p["prediction"]),
                          **({"summary": res(p["summary"])} if p.get("summary") else {})}
                         for p in self.panels),
            histograms=res(self.histograms),
            histogram_summary=res(self.histogram_summary),
            landscape=res(self.landscape),
            sidecar=res(self.sidecar),
            prediction=res(self.prediction),
            summary=res(self.summary),
        )


@dataclass(frozen=True)
class RenderResult:
    """Where the image went, plus every number that was drawn on it."""

    path: str
    annotations: dict = field(default_factory=dict)
    notes: tuple[str, ...] = ()


def render(spec: FigureSpec) -> RenderResult:
    """Render one figure to ``spec.out`` and report its annotations."""
    renderer = {
        "prediction_overlay": _render_overlay,
        "histogram_grid": _render_histogram_grid,
        "landscape_surface": _render_landscape,
        "heatmap": _render_heatmap,
    }[spec.kind]
    fig, annotations, notes = renderer(spec)
    try:
        Path(spec.out).parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(spec.out, dpi=150)
    finally:
        plt.close(fig)
    return RenderResult(path=str(spec.out), annotations=annotations,
                        notes=tuple(notes))


# ----------------------------------------------------------------------
# prediction overlays (1-D curves)

def _render_overlay(spec: FigureSpec):
    n = len(spec.panels)
    fig, axes = plt.subplots(1, n, figsize=(4.2 * n, 3.4), squeeze=False)
    annotations = {}
    for ax, panel in zip(axes[0], spec.panels):
        pred = read_prediction(panel["prediction"])
        if pred.dim != 1:
            raise SchemaError(f"{panel['prediction']}: prediction_overlay "
                              f"needs 1-D data, got {pred.dim} coordinates")
        x = pred.points[:, 0]
        ax.plot(x, pred.exact, color="black", lw=1.2, label="exact")
        ax.plot(x, pred.predicted, color="tab:cyan", lw=1.2, ls="--",
                label="predicted")
        label = panel.get("label", Path(panel["prediction"]).parent.name)
        title = label
        if panel.get("summary"):
            summary = read_summary(panel["summary"])
            l2 = summary["relative_l2"]
            annotations[f"{label}.relative_l2"] = l2
            title += f"\nL2r = {fmt(l2)}"
        ax.set_title(title, fontsize=9)
        ax.set_xlabel("x")
        ax.legend(fontsize=7)
    if spec.title:
        fig.suptitle(spec.title)
    fig.tight_layout()
    return fig, annotations, []


# ----------------------------------------------------------------------
# per-layer weight histograms

def _render_histogram_grid(spec: FigureSpec):
    layers = read_histograms(spec.histograms, spec.histogram_summary)
    ncols = min(3, len(layers))
    nrows = math.ceil(len(layers) / ncols)
    fig, axes = plt.subplots(nrows, ncols, figsize=(3.4 * ncols, 2.6 * nrows),
                             squeeze=False)
    annotations = {}
    for ax, layer in zip(axes.ravel(), layers):
        ax.stairs(layer.counts, layer.edges, fill=True, color="tab:blue")
        ax.set_title(f"layer {layer.layer}", fontsize=9)
        ax.text(0.02, 0.95,
                f"mean = {fmt(layer.mean)}\nvar = {fmt(layer.variance)}",
                transform=ax.transAxes, fontsize=6, va="top")
        annotations[f"layer{layer.layer}.mean"] = layer.mean
        annotations[f"layer{layer.layer}.variance"] = layer.variance
    for ax in axes.ravel()[len(layers):]:
        ax.set_axis_off()
    if spec.title:
        fig.suptitle(spec.title)
    fig.tight_layout()
    return fig, annotations, []


# ----------------------------------------------------------------------
# loss-landscape surfaces

def _render_landscape(spec: FigureSpec):
    scape = read_landscape(spec.landscape, spec.sidecar)
    raw = scape.losses
    fin = finite(raw)
    if fin.size == 0:
        raise SchemaError(f"{spec.landscape}: no finite loss values to plot")
    lo, hi = float(fin.min()), float(fin.max())

    log = spec.log_scale
    if log is None:
        log = lo > 0 and hi / lo > LOG_SCALE_RATIO
    z = raw.copy()
    z[~np.isfinite(z)] = np.nan
    if log:
        z = np.where(z > 0, np.log10(np.where(z > 0, z, 1.0)), np.nan)

    fig = plt.figure(figsize=(5.4, 4.4))
    ax = fig.add_subplot(projection="3d")
    A, B = np.meshgrid(scape.alphas, scape.betas, indexing="ij")
    ax.plot_surface(A, B, z, cmap="viridis", linewidth=0, antialiased=False)
    ax.set_xlabel(r"$\alpha$")
    ax.set_ylabel(r"$\beta$")
    ax.set_zlabel("log10(loss)" if log else "loss")
    ax.set_title(spec.title or f"center loss = {fmt(scape.center_loss)}",
                 fontsize=9)
    scale_note = "color: log10(loss)" if log else "color: raw loss"
    fig.text(0.02, 0.02,
             f"{scale_note}   min = {fmt(lo)}   max = {fmt(hi)}", fontsize=6)
    annotations = {"center_loss": scape.center_loss,
                   "min_loss": lo, "max_loss": hi}
    return fig, annotations, [scale_note]


# ----------------------------------------------------------------------
# 2-D field heatmaps

def _grid_2d(pred):
    n = pred.points.shape[0]
    res = math.isqrt(n)
    if res * res != n:
        raise SchemaError(f"{n} prediction rows do not form a square grid")
    # rows are written x-fastest: each block of res rows shares one y
    x = pred.points[:, 0].reshape(res, res)
    y = pred.points[:, 1].reshape(res, res)
    if not (np.all(x == x[:1, :]) and np.all(y == y[:, :1])):
        raise SchemaError("prediction rows are not in x-fastest grid order")
    return x, y, pred.predicted.reshape(res, res), pred.exact.reshape(res, res)


def _render_heatmap(spec: FigureSpec):
    pred = read_prediction(spec.prediction)
    if pred.dim != 2:
        raise SchemaError(f"{spec.prediction}: heatmap needs 2-D data, "
                          f"got {pred.dim} coordinate column(s)")
    x, y, up, ue = _grid_2d(pred)
    fig, axes = plt.subplots(1, 2, figsize=(8.6, 3.6))
    for ax, z, name in ((axes[0], up, "predicted"), (axes[1], ue, "exact")):
        im = ax.pcolormesh(x, y, z, cmap="RdBu_r", shading="auto")
        fig.colorbar(im, ax=ax, shrink=0.9)
        ax.set_title(name, fontsize=9)
        ax.set_xlabel("x")
        ax.set_ylabel("y")
        ax.set_aspect("equal")
    annotations = {}
    title = spec.title or ""
    if spec.summary:
        summary = read_summary(spec.summary)
        l2 = summary["relative_l2"]
        annotations["relative_l2"] = l2
        title = (title + "  " if title else "") + f"L2r = {fmt(l2)}"
    if title:
        fig.suptitle(title, fontsize=10)
    fig.tight_layout()
    return fig, annotations, []
