"""Renderer tests over synthesized artifacts."""

import json
import math

import numpy as np
import pytest

from eclplot import FigureSpec, SchemaError, render
from eclplot.artifacts import fmt

from test_artifacts import histogram_files, landscape_files, write


def prediction_1d(tmp_path, name="p.csv", n=20, offset=0.0):
    xs = np.linspace(0.0, 1.0, n)
    rows = ["x,u_pred,u_exact"]
    for x in xs:
        x = float(x)
        exact = math.sin(math.pi * x)
        rows.append(f"{x!r},{exact + offset!r},{exact!r}")
    return write(tmp_path / name, "\n".join(rows) + "\n")


def prediction_2d(tmp_path, name="p2.csv", res=5):
    axis = [float(v) for v in np.linspace(0.0, 1.0, res)]
    rows = ["x,y,u_pred,u_exact"]
    for y in axis:
        for x in axis:  # x fastest, matching the training-side export
            u = math.cos(math.pi * x) * math.exp(-y)
            rows.append(f"{x!r},{y!r},{u!r},{u!r}")
    return write(tmp_path / name, "\n".join(rows) + "\n")


def summary_file(tmp_path, name="s.json", l2=0.125, diverged=False):
    return write(tmp_path / name, json.dumps(
        {"problem": "poisson1d", "omega": 5, "objective": "pinn",
         "relative_l2": l2, "diverged": diverged}))


class TestSpecValidation:
    def test_unknown_kind(self):
        with pytest.raises(ValueError, match="unknown figure kind"):
            FigureSpec(kind="pie_chart", out="x.png")

    def test_missing_required_input(self):
        with pytest.raises(ValueError, match="landscape"):
            FigureSpec(kind="landscape_surface", out="x.png")

    def test_unknown_key_rejected(self):
        with pytest.raises(ValueError, match="colormap"):
            FigureSpec.from_dict({"kind": "heatmap", "out": "x.png",
                                  "prediction": "p.csv", "colormap": "jet"})

    def test_panel_without_prediction(self):
        with pytest.raises(ValueError, match="panel 0"):
            FigureSpec(kind="prediction_overlay", out="x.png",
                       panels=({"label": "a"},))


class TestOverlay:
    def test_renders_and_reports_l2(self, tmp_path):
        spec = FigureSpec(
            kind="prediction_overlay", out=str(tmp_path / "fig.png"),
            panels=({"prediction": str(prediction_1d(tmp_path)),
                     "summary": str(summary_file(tmp_path)),
                     "label": "omega5"},))
        result = render(spec)
        assert (tmp_path / "fig.png").stat().st_size > 0
        assert result.annotations == {"omega5.relative_l2": 0.125}

    def test_identical_curves_l2_from_artifact_not_recomputed(self, tmp_path):
        # u_pred == u_exact but the summary says 0.5: the figure must say 0.5
        spec = FigureSpec(
            kind="prediction_overlay", out=str(tmp_path / "fig.png"),
            panels=({"prediction": str(prediction_1d(tmp_path, offset=0.0)),
                     "summary": str(summary_file(tmp_path, l2=0.5)),
                     "label": "same"},))
        assert render(spec).annotations["same.relative_l2"] == 0.5

    def test_three_panel_layout(self, tmp_path):
        panels = tuple(
            {"prediction": str(prediction_1d(tmp_path, name=f"p{k}.csv")),
             "label": f"omega{k}"}
            for k in (5, 10, 15))
        result = render(FigureSpec(kind="prediction_overlay",
                                   out=str(tmp_path / "three.png"),
                                   panels=panels))
        assert result.annotations == {}  # no summaries given
        assert (tmp_path / "three.png").exists()

    def test_rejects_2d_prediction(self, tmp_path):
        spec = FigureSpec(kind="prediction_overlay",
                          out=str(tmp_path / "fig.png"),
                          panels=({"prediction": str(prediction_2d(tmp_path))},))
        with pytest.raises(SchemaError, match="1-D"):
            render(spec)


class TestHistogramGrid:
    def test_renders_with_moments(self, tmp_path):
        h, s = histogram_files(tmp_path)
        result = render(FigureSpec(kind="histogram_grid",
                                   out=str(tmp_path / "h.png"),
                                   histograms=str(h), histogram_summary=str(s)))
        assert result.annotations == {
            "layer1.mean": 0.6, "layer1.variance": 0.04,
            "layer2.mean": 0.1, "layer2.variance": 0.25,
        }
        assert (tmp_path / "h.png").exists()


class TestLandscapeSurface:
    def test_constant_grid_min_equals_max(self, tmp_path):
        csv_path, side = landscape_files(tmp_path, losses=["3.5"] * 9,
                                         center=3.5)
        result = render(FigureSpec(kind="landscape_surface",
                                   out=str(tmp_path / "l.png"),
                                   landscape=str(csv_path), sidecar=str(side)))
        assert result.annotations["min_loss"] == result.annotations["max_loss"] == 3.5
        assert result.annotations["center_loss"] == 3.5
        assert "raw loss" in result.notes[0]

    def test_wide_range_switches_to_log(self, tmp_path):
        losses = [str(v) for v in np.geomspace(1e-2, 1e4, 9)]
        csv_path, side = landscape_files(tmp_path, losses=losses, center=1.0)
        result = render(FigureSpec(kind="landscape_surface",
                                   out=str(tmp_path / "l.png"),
                                   landscape=str(csv_path), sidecar=str(side)))
        assert "log10" in result.notes[0]

    def test_log_override_off(self, tmp_path):
        losses = [str(v) for v in np.geomspace(1e-2, 1e4, 9)]
        csv_path, side = landscape_files(tmp_path, losses=losses, center=1.0)
        result = render(FigureSpec(kind="landscape_surface",
                                   out=str(tmp_path / "l.png"),
                                   landscape=str(csv_path), sidecar=str(side),
                                   log_scale=False))
        assert "raw loss" in result.notes[0]

    def test_inf_cells_tolerated(self, tmp_path):
        csv_path, side = landscape_files(tmp_path,
                                         losses=["inf"] * 4 + ["2.0"] * 5,
                                         center="inf")
        result = render(FigureSpec(kind="landscape_surface",
                                   out=str(tmp_path / "l.png"),
                                   landscape=str(csv_path), sidecar=str(side)))
        assert result.annotations["center_loss"] == np.inf
        assert result.annotations["max_loss"] == 2.0

    def test_all_inf_is_an_error(self, tmp_path):
        csv_path, side = landscape_files(tmp_path, losses=["inf"] * 9,
                                         center="inf")
        with pytest.raises(SchemaError, match="finite"):
            render(FigureSpec(kind="landscape_surface",
                              out=str(tmp_path / "l.png"),
                              landscape=str(csv_path), sidecar=str(side)))


class TestHeatmap:
    def test_renders_with_l2(self, tmp_path):
        result = render(FigureSpec(
            kind="heatmap", out=str(tmp_path / "hm.png"),
            prediction=str(prediction_2d(tmp_path)),
            summary=str(summary_file(tmp_path, l2=0.0123))))
        assert result.annotations == {"relative_l2": 0.0123}
        assert (tmp_path / "hm.png").exists()

    def test_rejects_1d_prediction(self, tmp_path):
        spec = FigureSpec(kind="heatmap", out=str(tmp_path / "hm.png"),
                          prediction=str(prediction_1d(tmp_path)))
        with pytest.raises(SchemaError, match="2-D"):
            render(spec)

    def test_rejects_non_square_grid(self, tmp_path):
        p = write(tmp_path / "p.csv",
                  "x,y,u_pred,u_exact\n" +
                  "".join(f"{x},0.0,1.0,1.0\n" for x in (0.0, 0.5, 1.0)))
        with pytest.raises(SchemaError, match="square"):
            render(FigureSpec(kind="heatmap", out=str(tmp_path / "hm.png"),
                              prediction=str(p)))

    def test_rejects_shuffled_grid(self, tmp_path):
        # y varies fastest here: the reader must refuse to reshape it
        axis = [0.0, 0.5, 1.0]
        rows = ["x,y,u_pred,u_exact"]
        for x in axis:
            for y in axis:
                rows.append(f"{x},{y},1.0,1.0")
        p = write(tmp_path / "p.csv", "\n".join(rows) + "\n")
        with pytest.raises(SchemaError, match="order"):
            render(FigureSpec(kind="heatmap", out=str(tmp_path / "hm.png"),
                              prediction=str(p)))


class TestDeterminism:
    def test_same_inputs_same_bytes(self, tmp_path):
        h, s = histogram_files(tmp_path)
        spec1 = FigureSpec(kind="histogram_grid", out=str(tmp_path / "a.png"),
                           histograms=str(h), histogram_summary=str(s))
        spec2 = FigureSpec(kind="histogram_grid", out=str(tmp_path / "b.png"),
                           histograms=str(h), histogram_summary=str(s))
        render(spec1)
        render(spec2)
        assert (tmp_path / "a.png").read_bytes() == (tmp_path / "b.png").read_bytes()
