"""Figure rendering for lplaw run directories.

Reads only the documented CSV/JSON artifacts (results.csv, density.csv,
delta.csv, losses.csv plus their JSON sidecars), never the producing
library, so either side can be rebuilt independently.
"""

__version__ = "0.1.0"

from .render import FigureSpec, SchemaError, render

__all__ = ["FigureSpec", "SchemaError", "render", "__version__"]
