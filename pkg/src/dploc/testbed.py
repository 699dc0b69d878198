"""Deterministic synthetic-city fixtures for oracles and desk-scale runs.

A Manhattan-style grid graph with Poisson per-edge point counts stands in
for real city data; offset_sigma controls how well points align with the
network (0 puts every point exactly on an edge).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameter
from .geometry import BoundingBox, PointSet
from .roadnet import Edge, RoadGraph
from .rng import stream


@dataclass(frozen=True)
class CitySpec:
    rows: int
    cols: int
    spacing: float
    points_per_edge: float
    offset_sigma: float = 0.0
    along_edge_profile: str = "uniform"  # "uniform" | "clustered"
    seed: int = 0

    def __post_init__(self):
        if self.rows < 2 or self.cols < 2:
            raise InvalidParameter("need rows >= 2 and cols >= 2")
        if not (self.spacing > 0):
            raise InvalidParameter("spacing must be positive")
        if self.offset_sigma < 0:
            raise InvalidParameter("offset_sigma must be nonnegative")
        if self.along_edge_profile not in ("uniform", "clustered"):
            raise InvalidParameter("profile must be 'uniform' or 'clustered'")


def city_graph(spec: CitySpec) -> RoadGraph:
    """rows x cols intersection grid with horizontal and vertical edges."""
    node_ids, nodes = [], []
    for r in range(spec.rows):
        for c in range(spec.cols):
            node_ids.append(r * spec.cols + c)
            nodes.append((c * spec.spacing, r * spec.spacing))
    nodes = np.array(nodes, dtype=float)

    edges = []
    eid = 0
    for r in range(spec.rows):
        for c in range(spec.cols - 1):
            a = nodes[r * spec.cols + c]
            b = nodes[r * spec.cols + c + 1]
            edges.append(Edge(id=eid, polyline=[a, b]))
            eid += 1
    for r in range(spec.rows - 1):
        for c in range(spec.cols):
            a = nodes[r * spec.cols + c]
            b = nodes[(r + 1) * spec.cols + c]
            edges.append(Edge(id=eid, polyline=[a, b]))
            eid += 1
    return RoadGraph(node_ids, nodes, edges)


def _along_positions(n: int, length: float, profile: str, rng: np.random.Generator) -> np.ndarray:
    if profile == "uniform":
        return rng.random(n) * length
    # clustered: a heavy and a light cluster along the edge
    heavy = rng.random(n) < 0.7
    l = np.where(heavy,
                 rng.normal(0.30 * length, 0.06 * length, n),
                 rng.normal(0.75 * length, 0.06 * length, n))
    return np.clip(l, 0.0, length)


def generate_city(spec: CitySpec) -> tuple[RoadGraph, PointSet]:
    """Graph plus points scattered around its edges.

    Per-edge counts are Poisson(points_per_edge); along-edge positions follow
    the profile; perpendicular offsets are |Normal(0, offset_sigma)| on a
    random side. Fully deterministic for a given spec.
    """
    graph = city_graph(spec)
    rng = stream(spec.seed, "testbed.city")
    chunks = []
    for edge in graph.edges:
        n = int(rng.poisson(spec.points_per_edge))
        if n == 0:
            continue
        l = _along_positions(n, edge.length, spec.along_edge_profile, rng)
        offs = np.abs(rng.normal(0.0, spec.offset_sigma, n)) if spec.offset_sigma > 0 else np.zeros(n)
        side = rng.integers(0, 2, size=n) * 2 - 1
        base, unit = edge.point_at(l)
        normal = np.column_stack([-unit[:, 1], unit[:, 0]])
        chunks.append(base + (offs * side)[:, None] * normal)
    xy = np.concatenate(chunks) if chunks else np.empty((0, 2))
    return graph, PointSet(xy)


def generate_blobs(k: int, points_per_blob: int, sigma: float,
                   bounds: BoundingBox, seed: int) -> PointSet:
    """k Gaussian blobs at seeded random centers, clipped into bounds."""
    if k < 1:
        raise InvalidParameter("k must be >= 1")
    rng = stream(seed, "testbed.blobs")
    centers = np.column_stack([
        bounds.min_x + rng.random(k) * bounds.width,
        bounds.min_y + rng.random(k) * bounds.height,
    ])
    chunks = []
    for c in centers:
        pts = c + rng.normal(0.0, sigma, size=(points_per_blob, 2)) if sigma > 0 \
            else np.tile(c, (points_per_blob, 1))
        chunks.append(pts)
    xy = np.concatenate(chunks)
    xy[:, 0] = np.clip(xy[:, 0], bounds.min_x, bounds.max_x)
    xy[:, 1] = np.clip(xy[:, 1], bounds.min_y, bounds.max_y)
    return PointSet(xy)


def dataset_bounds(points: PointSet, graph: RoadGraph | None = None,
                   pad: float = 0.0) -> BoundingBox:
    """Bounding box of the points (and graph nodes, when given)."""
    xs = [points.xy] if len(points) else []
    if graph is not None:
        xs.append(graph.nodes_xy)
    if not xs:
        raise InvalidParameter("need at least one point or node")
    all_xy = np.concatenate(xs)
    lo = all_xy.min(axis=0) - pad
    hi = all_xy.max(axis=0) + pad
    # degenerate extents get a nominal 1 m so the box stays valid
    for axis in range(2):
        if hi[axis] <= lo[axis]:
            lo[axis] -= 0.5
            hi[axis] += 0.5
    return BoundingBox(lo[0], lo[1], hi[0], hi[1])
