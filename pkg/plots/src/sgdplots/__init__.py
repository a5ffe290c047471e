"""Static figures for experiment CSVs: training curves, rate fits,
drift-vs-rate curves, and staleness histograms."""

from .reader import PlotError, Table, load_table
from .figures import KINDS, render

__all__ = ["PlotError", "Table", "load_table", "KINDS", "render"]
