"""Planar geometry kernel: local projection, polygons, fan triangulation,
uniform sampling, Voronoi cells via half-plane clipping, and diameters.

All coordinates are meters in a local equirectangular projection. City-scale
extents keep the projection distortion far below the 100 m granularity the
rest of the pipeline works at.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import InputError, InvalidParameter, UnsupportedShape

EARTH_RADIUS_M = 6_371_000.0
_TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# points and projection

@dataclass
class PointSet:
    """Planar points in local meters with a provenance tag."""

    xy: np.ndarray
    kind: str = "real"  # "real" | "synthetic"

    def __post_init__(self):
        self.xy = np.atleast_2d(np.asarray(self.xy, dtype=float))
        if self.xy.size == 0:
            self.xy = self.xy.reshape(0, 2)
        if self.xy.ndim != 2 or self.xy.shape[1] != 2:
            raise InputError("points must have shape (N, 2)")
        if not np.isfinite(self.xy).all():
            raise InputError("points must have finite coordinates")
        if self.kind not in ("real", "synthetic"):
            raise InputError(f"unknown provenance tag {self.kind!r}")

    def __len__(self) -> int:
        return self.xy.shape[0]


def project(lon, lat, origin: tuple[float, float]):
    """Equirectangular projection of lon/lat degrees to local meters.

    x = R * (lon - lon0) * cos(lat0), y = R * (lat - lat0), angles in radians.
    Invertible via unproject with the same origin.
    """
    lon0, lat0 = origin
    lat_arr = np.asarray(lat, dtype=float)
    if abs(lat0) >= 89.0 or np.any(np.abs(lat_arr) >= 89.0):
        raise InvalidParameter("latitudes must satisfy |lat| < 89 degrees")
    x = EARTH_RADIUS_M * np.radians(np.asarray(lon, dtype=float) - lon0) * math.cos(math.radians(lat0))
    y = EARTH_RADIUS_M * np.radians(lat_arr - lat0)
    return x, y


def unproject(x, y, origin: tuple[float, float]):
    """Inverse of project for the same origin."""
    lon0, lat0 = origin
    if abs(lat0) >= 89.0:
        raise InvalidParameter("origin latitude must satisfy |lat0| < 89 degrees")
    lon = lon0 + np.degrees(np.asarray(x, dtype=float) / (EARTH_RADIUS_M * math.cos(math.radians(lat0))))
    lat = lat0 + np.degrees(np.asarray(y, dtype=float) / EARTH_RADIUS_M)
    return lon, lat


@dataclass(frozen=True)
class LocalProjection:
    """A projection anchored at a fixed lon/lat origin."""

    lon0: float
    lat0: float

    def to_xy(self, lonlat: np.ndarray) -> np.ndarray:
        lonlat = np.atleast_2d(np.asarray(lonlat, dtype=float))
        x, y = project(lonlat[:, 0], lonlat[:, 1], (self.lon0, self.lat0))
        return np.column_stack([x, y])

    def to_lonlat(self, xy: np.ndarray) -> np.ndarray:
        xy = np.atleast_2d(np.asarray(xy, dtype=float))
        lon, lat = unproject(xy[:, 0], xy[:, 1], (self.lon0, self.lat0))
        return np.column_stack([lon, lat])


@dataclass(frozen=True)
class BoundingBox:
    min_x: float
    min_y: float
    max_x: float
    max_y: float

    def __post_init__(self):
        if not (self.max_x > self.min_x and self.max_y > self.min_y):
            raise InvalidParameter("bounding box must have positive extent")

    @property
    def width(self) -> float:
        return self.max_x - self.min_x

    @property
    def height(self) -> float:
        return self.max_y - self.min_y

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.min_x + self.max_x), 0.5 * (self.min_y + self.max_y))

    def contains(self, xy: np.ndarray) -> np.ndarray:
        xy = np.atleast_2d(xy)
        return ((xy[:, 0] >= self.min_x) & (xy[:, 0] <= self.max_x)
                & (xy[:, 1] >= self.min_y) & (xy[:, 1] <= self.max_y))


# ---------------------------------------------------------------------------
# polygons

def _signed_area(v: np.ndarray) -> float:
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


class Polygon:
    """Simple polygon stored as a counterclockwise open ring.

    Constructors in this package only build simple polygons (rectangles,
    clipped Voronoi cells, fan triangles); self-intersection is not checked.
    """

    __slots__ = ("vertices", "area", "_centroid", "_halfplanes")

    def __init__(self, vertices):
        v = np.asarray(vertices, dtype=float)
        if v.ndim != 2 or v.shape[0] < 3 or v.shape[1] != 2:
            raise InvalidParameter("polygon needs at least 3 (x, y) vertices")
        if not np.isfinite(v).all():
            raise InvalidParameter("polygon vertices must be finite")
        area = _signed_area(v)
        if area <= 0.0:
            raise InvalidParameter("polygon must wind counterclockwise with positive area")
        self.vertices = v
        self.area = area
        self._centroid = None
        self._halfplanes = None

    @classmethod
    def from_rect(cls, min_x: float, min_y: float, max_x: float, max_y: float) -> "Polygon":
        return cls([(min_x, min_y), (max_x, min_y), (max_x, max_y), (min_x, max_y)])

    @property
    def centroid(self) -> np.ndarray:
        if self._centroid is None:
            v = self.vertices
            x, y = v[:, 0], v[:, 1]
            xn, yn = np.roll(x, -1), np.roll(y, -1)
            cross = x * yn - xn * y
            cx = float(np.sum((x + xn) * cross)) / (6.0 * self.area)
            cy = float(np.sum((y + yn) * cross)) / (6.0 * self.area)
            self._centroid = np.array([cx, cy])
        return self._centroid

    def bbox(self) -> BoundingBox:
        v = self.vertices
        return BoundingBox(v[:, 0].min(), v[:, 1].min(), v[:, 0].max(), v[:, 1].max())

    def convex_halfplanes(self) -> tuple[np.ndarray, np.ndarray]:
        """(A, b) with inside <=> A @ p <= b (boundary on the <= side).

        Only meaningful for convex polygons; used as the hot-path containment
        check for grid cells and Voronoi cells.
        """
        if self._halfplanes is None:
            v = self.vertices
            e = np.roll(v, -1, axis=0) - v
            A = np.column_stack([e[:, 1], -e[:, 0]])
            b = np.sum(A * v, axis=1)
            self._halfplanes = (A, b)
        return self._halfplanes


@dataclass(frozen=True)
class Triangle:
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray

    @property
    def area(self) -> float:
        return abs(self.signed_area)

    @property
    def signed_area(self) -> float:
        ab = self.b - self.a
        ac = self.c - self.a
        return 0.5 * float(ab[0] * ac[1] - ab[1] * ac[0])


def triangle_sample(tri: Triangle, rng: np.random.Generator) -> np.ndarray:
    """Uniform point in a triangle via the square-root parameterization."""
    r1 = rng.random()
    r2 = rng.random()
    s = math.sqrt(r1)
    return (1.0 - s) * tri.a + s * (1.0 - r2) * tri.b + s * r2 * tri.c


def fan_triangulate(poly: Polygon) -> list[Triangle]:
    """Split a polygon into triangles (centroid, v_k, v_{k+1}), one per edge.

    Valid for polygons star-shaped from their centroid (all rectangles and
    Voronoi cells here are convex). A folded fan raises UnsupportedShape.
    """
    c = poly.centroid
    v = poly.vertices
    tris = [Triangle(c, v[k], v[(k + 1) % len(v)]) for k in range(len(v))]
    tol = -1e-12 * poly.area
    if any(t.signed_area < tol for t in tris):
        raise UnsupportedShape("polygon is not star-shaped from its centroid")
    return tris


def _sample_triangles(a: np.ndarray, b: np.ndarray, c: np.ndarray,
                      n: int, rng: np.random.Generator) -> np.ndarray:
    """Vectorized triangle point picking over per-row triangles (a, b, c)."""
    s = np.sqrt(rng.random(n))[:, None]
    r2 = rng.random(n)[:, None]
    return (1.0 - s) * a + s * (1.0 - r2) * b + s * r2 * c


def polygon_sample(poly: Polygon, rng: np.random.Generator, size: int | None = None):
    """Uniform sample over a polygon: fan triangle picked by area, then
    triangle point picking. size=None returns a single (2,) point."""
    n = 1 if size is None else int(size)
    tris = fan_triangulate(poly)
    areas = np.array([max(t.signed_area, 0.0) for t in tris])
    total = areas.sum()
    if total <= 0.0:
        probs = np.full(len(tris), 1.0 / len(tris))
    else:
        probs = areas / total
    idx = rng.choice(len(tris), size=n, p=probs)
    a = np.array([t.a for t in tris])[idx]
    b = np.array([t.b for t in tris])[idx]
    c = np.array([t.c for t in tris])[idx]
    out = _sample_triangles(a, b, c, n, rng)
    return out[0] if size is None else out


def sample_rect(rect: tuple[float, float, float, float],
                n: int, rng: np.random.Generator) -> np.ndarray:
    """polygon_sample specialized to axis-aligned rectangles.

    The centroid fan of a rectangle is four equal-area triangles, so the
    pick reduces to a fair integer draw; the point-picking step is identical.
    """
    x0, y0, x1, y1 = rect
    corners = np.array([(x0, y0), (x1, y0), (x1, y1), (x0, y1)])
    center = np.array([0.5 * (x0 + x1), 0.5 * (y0 + y1)])
    k = rng.integers(0, 4, size=n)
    a = np.broadcast_to(center, (n, 2))
    b = corners[k]
    c = corners[(k + 1) % 4]
    return _sample_triangles(a, b, c, n, rng)


def point_in_polygon(p, poly: Polygon) -> bool:
    """Ray-crossing containment test; boundary points count as inside."""
    return bool(points_in_polygon(np.asarray(p, dtype=float)[None, :], poly)[0])


def points_in_polygon(xy: np.ndarray, poly: Polygon,
                      boundary_tol: float = 1e-9) -> np.ndarray:
    """Vectorized point_in_polygon over an (N, 2) array."""
    xy = np.atleast_2d(np.asarray(xy, dtype=float))
    px, py = xy[:, 0], xy[:, 1]
    v = poly.vertices
    x1, y1 = v[:, 0], v[:, 1]
    x2, y2 = np.roll(x1, -1), np.roll(y1, -1)

    inside = np.zeros(len(xy), dtype=bool)
    on_boundary = np.zeros(len(xy), dtype=bool)
    tol2 = boundary_tol * boundary_tol
    for k in range(len(v)):
        ax, ay, bx, by = x1[k], y1[k], x2[k], y2[k]
        # crossing parity
        cond = (ay > py) != (by > py)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = (bx - ax) * (py - ay) / (by - ay) + ax
        inside ^= cond & (px < xint)
        # boundary proximity
        dx, dy = bx - ax, by - ay
        len2 = dx * dx + dy * dy
        if len2 > 0.0:
            t = np.clip(((px - ax) * dx + (py - ay) * dy) / len2, 0.0, 1.0)
        else:
            t = 0.0
        ddx = px - (ax + t * dx)
        ddy = py - (ay + t * dy)
        on_boundary |= (ddx * ddx + ddy * ddy) <= tol2
    return inside | on_boundary


def polygon_diameter(poly: Polygon) -> float:
    """Max pairwise vertex distance (the exact diameter for convex polygons)."""
    v = poly.vertices
    d2 = np.sum((v[:, None, :] - v[None, :, :]) ** 2, axis=-1)
    return float(np.sqrt(d2.max()))


# ---------------------------------------------------------------------------
# Voronoi cells by iterative half-plane clipping

def _clip_halfplane(vertices: np.ndarray, m: np.ndarray, n: np.ndarray) -> np.ndarray:
    """Clip a convex CCW polygon to the half-plane {x : (x - m) . n <= 0}."""
    s = (vertices - m) @ n
    keep = s <= 0.0
    if keep.all():
        return vertices
    out = []
    nv = len(vertices)
    for i in range(nv):
        j = (i + 1) % nv
        if keep[i]:
            out.append(vertices[i])
        if keep[i] != keep[j]:
            t = s[i] / (s[i] - s[j])
            out.append(vertices[i] + t * (vertices[j] - vertices[i]))
    return np.asarray(out) if out else np.empty((0, 2))


def voronoi_cells(centroids, clip: BoundingBox) -> list[Polygon]:
    """Voronoi cells of the centroids, clipped to a rectangle.

    Each cell starts as the clip box and is cut by the perpendicular
    bisector against the other sites, nearest first; sites farther than
    twice the cell's current max vertex distance cannot cut and are skipped.
    Cells tile the box exactly (up to float rounding).
    """
    sites = np.atleast_2d(np.asarray(centroids, dtype=float))
    k = len(sites)
    if k < 1:
        raise InvalidParameter("need at least one centroid")
    if k > 1:
        tree = cKDTree(sites)
        dist, _ = tree.query(sites, k=2)
        if dist[:, 1].min() < 1e-6:
            raise InvalidParameter("centroids must be pairwise separated by >= 1e-6 m")

    box = np.array([(clip.min_x, clip.min_y), (clip.max_x, clip.min_y),
                    (clip.max_x, clip.max_y), (clip.min_x, clip.max_y)])
    cells = []
    for i in range(k):
        ci = sites[i]
        verts = box
        if k > 1:
            d = np.linalg.norm(sites - ci, axis=1)
            order = np.argsort(d, kind="stable")
            maxd = np.sqrt(np.max(np.sum((verts - ci) ** 2, axis=1)))
            for j in order:
                if j == i:
                    continue
                if d[j] >= 2.0 * maxd:
                    break  # bisector cannot reach the current cell
                m = 0.5 * (ci + sites[j])
                n = sites[j] - ci
                verts = _clip_halfplane(verts, m, n)
                if len(verts) < 3:
                    raise InvalidParameter(
                        f"Voronoi cell of site {i} degenerated; sites must lie in the clip box")
                maxd = np.sqrt(np.max(np.sum((verts - ci) ** 2, axis=1)))
        cells.append(Polygon(verts))
    return cells
