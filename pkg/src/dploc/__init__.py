"""Differentially private synthetic 2-D location data.

Two generation families: private spatial partitioning with in-region
generation (uniform, weighted-uniform, private KDE), and road-network-
constrained generation from noisy per-edge micro-histograms. An evaluation
suite quantifies synthetic-vs-real utility (NCE, MEDD, range MAE, hotspot
and facility-location Sorensen-Dice).
"""

__version__ = "0.1.0"

from .dp_core import Budget, Method, resolve_budget
from .geometry import BoundingBox, PointSet

__all__ = ["Budget", "Method", "resolve_budget", "BoundingBox", "PointSet", "__version__"]
