"""Figures from splitmh experiment CSVs.

This package reads only the public CSV schema emitted by the `splitmh`
command line tool; it never imports the sampling library itself.
"""

from plots.figures import FigureSpec, KINDS, PlotError, load_spec, render

__all__ = ["FigureSpec", "KINDS", "PlotError", "load_spec", "render"]
