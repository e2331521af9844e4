"""feedsim-plot: figure rendering for feedsim sweep CSV output."""

__version__ = "0.1.0"

from .figures import FigureError, METRICS, load_runs, render_figures

__all__ = ["FigureError", "METRICS", "load_runs", "render_figures"]
