"""Utility metrics comparing a synthetic point set against the real one:
normalized cell error, mean edge distance difference, range-query MAE,
hotspot overlap, and facility-location overlap (both via Sorensen-Dice).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter
from scipy.spatial import cKDTree

from .errors import InvalidParameter, UndefinedMetric
from .geometry import BoundingBox, PointSet
from .roadnet import RoadGraph, match_points

DEFAULT_CELL_SIZE = 100.0  # meters
DEFAULT_HOTSPOT_SIGMA = 2.0  # grid cells


def _grid_counts(points: PointSet, bounds: BoundingBox, nx: int, ny: int) -> np.ndarray:
    """Cell counts over bounds; coordinates are clipped into the box so
    points on (or a hair past) the border still count."""
    if not len(points):
        return np.zeros((ny, nx), dtype=np.int64)
    x = np.clip(points.xy[:, 0], bounds.min_x, bounds.max_x)
    y = np.clip(points.xy[:, 1], bounds.min_y, bounds.max_y)
    ix = np.clip(np.floor((x - bounds.min_x) / bounds.width * nx).astype(np.int64), 0, nx - 1)
    iy = np.clip(np.floor((y - bounds.min_y) / bounds.height * ny).astype(np.int64), 0, ny - 1)
    return np.bincount(iy * nx + ix, minlength=nx * ny).reshape(ny, nx)


def nce(real: PointSet, synth: PointSet, bounds: BoundingBox,
        cell_size: float = DEFAULT_CELL_SIZE) -> float:
    """Normalized cell error: L1 difference of cell counts over |real|."""
    if not (cell_size > 0):
        raise InvalidParameter("cell_size must be positive")
    if not len(real):
        raise UndefinedMetric("NCE needs a nonempty real set")
    nx = max(1, int(np.ceil(bounds.width / cell_size)))
    ny = max(1, int(np.ceil(bounds.height / cell_size)))
    cr = _grid_counts(real, bounds, nx, ny)
    cs = _grid_counts(synth, bounds, nx, ny)
    return float(np.abs(cr - cs).sum()) / len(real)


def medd(real: PointSet, synth: PointSet, graph: RoadGraph) -> float:
    """Absolute difference of mean point-to-nearest-edge distances."""
    if not len(real) or not len(synth):
        raise UndefinedMetric("MEDD needs nonempty point sets")
    dr = match_points(real, graph).d
    ds = match_points(synth, graph).d
    return abs(float(dr.mean()) - float(ds.mean()))


def range_counts(points: PointSet, locations: np.ndarray, radius: float) -> np.ndarray:
    """Points within radius (inclusive) of each location."""
    locations = np.atleast_2d(np.asarray(locations, dtype=float))
    if not len(points):
        return np.zeros(len(locations), dtype=np.int64)
    tree = cKDTree(points.xy)
    return np.asarray(tree.query_ball_point(locations, radius, return_length=True),
                      dtype=np.int64)


def range_mae(real: PointSet, synth: PointSet, locations, r: float) -> float:
    """Mean absolute error of within-r disc counts across query locations."""
    locations = np.atleast_2d(np.asarray(locations, dtype=float))
    if len(locations) < 1 or not (r > 0):
        raise InvalidParameter("need at least one location and r > 0")
    cr = range_counts(real, locations, r)
    cs = range_counts(synth, locations, r)
    return float(np.abs(cr - cs).mean())


@dataclass(frozen=True)
class HotspotSet:
    """Flat indices of the g x g cells whose smoothed density is strictly
    above the 95th percentile of all cells."""

    g: int
    cells: frozenset[int]

    def __len__(self) -> int:
        return len(self.cells)


def hotspots(points: PointSet, bounds: BoundingBox, g: int,
             sigma_cells: float = DEFAULT_HOTSPOT_SIGMA) -> HotspotSet:
    """Gaussian-smoothed g x g density (kernel truncated at 3 sigma, borders
    mirrored so a uniform field stays uniform); hotspot cells exceed the
    95th percentile of all g*g cells strictly."""
    if g < 2:
        raise InvalidParameter("g must be >= 2")
    counts = _grid_counts(points, bounds, g, g).astype(float)
    density = gaussian_filter(counts, sigma=sigma_cells, mode="reflect", truncate=3.0)
    cut = np.percentile(density, 95.0)
    cells = np.flatnonzero(density.ravel() > cut)
    return HotspotSet(g, frozenset(int(c) for c in cells))


def sdc(a: frozenset, b: frozenset) -> float:
    """Sorensen-Dice coefficient; two empty sets count as a perfect match."""
    if not a and not b:
        return 1.0
    return 2.0 * len(a & b) / (len(a) + len(b))


def hotspot_sdc(real: PointSet, synth: PointSet, bounds: BoundingBox, g: int,
                sigma_cells: float = DEFAULT_HOTSPOT_SIGMA) -> float:
    hr = hotspots(real, bounds, g, sigma_cells)
    hs = hotspots(synth, bounds, g, sigma_cells)
    return sdc(hr.cells, hs.cells)


def _nearest_candidate(xy: np.ndarray, candidates: np.ndarray, chunk: int = 8192) -> np.ndarray:
    """Nearest candidate per point; exact ties go to the lower index."""
    out = np.empty(len(xy), dtype=np.int64)
    c2 = np.sum(candidates ** 2, axis=1)
    for lo in range(0, len(xy), chunk):
        block = xy[lo:lo + chunk]
        d2 = np.sum(block ** 2, axis=1)[:, None] - 2.0 * block @ candidates.T + c2[None, :]
        out[lo:lo + chunk] = np.argmin(d2, axis=1)
    return out


def flq(points: PointSet, candidates, B: int, variant: str) -> frozenset[int]:
    """Facility location: pick B of the candidate sites.

    max-inf ranks candidates by the number of points they attract under
    nearest-candidate assignment. min-dist greedily adds the candidate that
    most reduces the total point-to-nearest-selected distance. All ties go
    to the lower candidate index.
    """
    candidates = np.atleast_2d(np.asarray(candidates, dtype=float))
    if B > len(candidates):
        raise InvalidParameter("B cannot exceed the number of candidates")
    variant = variant.lower().replace("_", "-")
    if variant not in ("max-inf", "min-dist"):
        raise InvalidParameter(f"unknown FLQ variant {variant!r}")
    if B == len(candidates):
        return frozenset(range(len(candidates)))

    if variant == "max-inf":
        if len(points):
            assign = _nearest_candidate(points.xy, candidates)
            attracted = np.bincount(assign, minlength=len(candidates))
        else:
            attracted = np.zeros(len(candidates), dtype=np.int64)
        order = np.lexsort((np.arange(len(candidates)), -attracted))
        return frozenset(int(i) for i in order[:B])

    # min-dist greedy
    if not len(points):
        return frozenset(range(B))
    d = np.sqrt(np.maximum(
        np.sum(points.xy ** 2, axis=1)[None, :]
        - 2.0 * candidates @ points.xy.T
        + np.sum(candidates ** 2, axis=1)[:, None], 0.0))
    current = np.full(len(points), np.inf)
    chosen: list[int] = []
    available = np.ones(len(candidates), dtype=bool)
    for _ in range(B):
        totals = np.minimum(d, current[None, :]).sum(axis=1)
        totals[~available] = np.inf
        pick = int(np.argmin(totals))
        chosen.append(pick)
        available[pick] = False
        current = np.minimum(current, d[pick])
    return frozenset(chosen)


def flq_sdc(real: PointSet, synth: PointSet, candidates, B: int, variant: str) -> float:
    return sdc(flq(real, candidates, B, variant), flq(synth, candidates, B, variant))


@dataclass
class MetricReport:
    """Bundle of utility metrics for one synthetic dataset."""

    nce: float = 0.0
    medd: float | None = None
    range_mae: dict = field(default_factory=dict)        # radius -> MAE
    hotspot_sdc: dict = field(default_factory=dict)      # granularity -> SDC
    flq_sdc: dict = field(default_factory=dict)          # variant -> SDC
    runtime_seconds: float = 0.0

    def to_jsonable(self) -> dict:
        return {
            "nce": self.nce,
            "medd": self.medd,
            "range_mae": {str(k): v for k, v in self.range_mae.items()},
            "hotspot_sdc": {str(k): v for k, v in self.hotspot_sdc.items()},
            "flq_sdc": dict(self.flq_sdc),
            "runtime_seconds": self.runtime_seconds,
        }


def evaluate(real: PointSet, synth: PointSet, bounds: BoundingBox,
             graph: RoadGraph | None = None, locations=None,
             radii=(100.0, 200.0, 500.0), granularities=(64, 128, 256),
             flq_b: int = 20, cell_size: float = DEFAULT_CELL_SIZE,
             sigma_cells: float = DEFAULT_HOTSPOT_SIGMA) -> MetricReport:
    """Full metric sweep. locations default to graph nodes when available;
    MEDD and the location-based metrics are skipped without a graph."""
    report = MetricReport()
    report.nce = nce(real, synth, bounds, cell_size)
    if graph is not None and len(synth):
        report.medd = medd(real, synth, graph)
    if locations is None and graph is not None:
        locations = graph.nodes_xy
    if locations is not None and len(locations):
        locations = np.atleast_2d(np.asarray(locations, dtype=float))
        for r in radii:
            report.range_mae[float(r)] = range_mae(real, synth, locations, r)
        b = min(flq_b, len(locations))
        for variant in ("max-inf", "min-dist"):
            report.flq_sdc[variant] = flq_sdc(real, synth, locations, b, variant)
    for g in granularities:
        report.hotspot_sdc[int(g)] = hotspot_sdc(real, synth, bounds, g, sigma_cells)
    return report
