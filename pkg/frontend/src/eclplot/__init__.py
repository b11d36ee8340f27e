"""Static figure rendering for ecl training artifacts."""

from .artifacts import (
    Landscape,
    LayerBins,
    Prediction,
    SchemaError,
    read_histograms,
    read_landscape,
    read_prediction,
    read_summary,
)
from .figures import KINDS, FigureSpec, RenderResult, render

__version__ = "0.1.0"
