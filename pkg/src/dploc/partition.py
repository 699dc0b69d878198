"""Private spatial partitioning: uniform grid, two-level adaptive grid, and
expanded-uniform-grid K-means (EUGKM) clustering with Voronoi regions.

Each builder returns a RegionSet whose per-region noisy counts are the only
data-derived values a consumer may publish. True counts and member indices
stay internal: they exist for the KDE generation path and for tests, and are
never serialized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dp_core import laplace_samples, sanitize_counts
from .errors import InputError, InvalidParameter
from .geometry import BoundingBox, LocalProjection, PointSet, Polygon, polygon_diameter, voronoi_cells
from .rng import stream

# Grid-size formulas are exact-integer sensitive: snap values within 1e-9 of
# an integer before taking the ceiling so float dust cannot bump a cell count.
_CEIL_SNAP = 1e-9


def _ceil_snapped(v: float) -> int:
    return int(math.ceil(v - _CEIL_SNAP))


def ugrid_dims(n_points: int, eps1: float) -> int:
    """Cells per side for a uniform grid: max(1, ceil(sqrt(N * eps1 / 10)))."""
    if n_points < 0 or not (eps1 > 0):
        raise InvalidParameter("need n_points >= 0 and eps1 > 0")
    return max(1, _ceil_snapped(math.sqrt(n_points * eps1 / 10.0)))


def agrid_level1_dims(n_points: int, eps1: float) -> int:
    """Coarse level of the adaptive grid: max(10, ceil(sqrt(N * eps1 / 10) / 4))."""
    if n_points < 0 or not (eps1 > 0):
        raise InvalidParameter("need n_points >= 0 and eps1 > 0")
    return max(10, _ceil_snapped(0.25 * math.sqrt(n_points * eps1 / 10.0)))


def agrid_level2_dims(noisy_count: int, eps2: float) -> int:
    """Per-cell refinement: max(1, ceil(sqrt(n' * eps2 / 5)))."""
    if noisy_count < 0 or not (eps2 > 0):
        raise InvalidParameter("need noisy_count >= 0 and eps2 > 0")
    return max(1, _ceil_snapped(math.sqrt(noisy_count * eps2 / 5.0)))


@dataclass
class Region:
    """One partition cell with its sanitized noisy count.

    true_count and member indices/coordinates are internal bookkeeping for
    the KDE path and the test oracles; they must never be serialized.
    """

    id: int
    noisy_count: int
    diameter: float
    rect: tuple[float, float, float, float] | None = None
    site: np.ndarray | None = None
    true_count: int = 0
    member_indices: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    member_xy: np.ndarray = field(default_factory=lambda: np.empty((0, 2)))
    _polygon: Polygon | None = field(default=None, repr=False)

    @property
    def polygon(self) -> Polygon:
        if self._polygon is None:
            self._polygon = Polygon.from_rect(*self.rect)
        return self._polygon


@dataclass
class RegionSet:
    regions: list[Region]
    bounds: BoundingBox
    method: str  # "ugrid" | "agrid" | "cluster"

    def __len__(self) -> int:
        return len(self.regions)

    def total_noisy_count(self) -> int:
        return int(sum(r.noisy_count for r in self.regions))

    def sites(self) -> np.ndarray:
        return np.array([r.site for r in self.regions])

    def to_jsonable(self, projection: LocalProjection) -> list[dict]:
        """Export regions for debugging/plots. Noisy counts only."""
        out = []
        for r in self.regions:
            ring = projection.to_lonlat(r.polygon.vertices)
            out.append({
                "id": r.id,
                "polygon": [[float(lon), float(lat)] for lon, lat in ring],
                "noisy_count": int(r.noisy_count),
            })
        return out


def _check_points_in_bounds(points: PointSet, bounds: BoundingBox) -> None:
    if len(points) and not bounds.contains(points.xy).all():
        raise InputError("all points must lie within the dataset bounds")


def _grid_assign(xy: np.ndarray, bounds: BoundingBox, m: int) -> tuple[np.ndarray, np.ndarray]:
    """Half-open cell membership [x0, x1) x [y0, y1); the last row/column is
    closed so the grid tiles the bounds exactly."""
    cw = bounds.width / m
    ch = bounds.height / m
    ix = np.clip(np.floor((xy[:, 0] - bounds.min_x) / cw).astype(np.int64), 0, m - 1)
    iy = np.clip(np.floor((xy[:, 1] - bounds.min_y) / ch).astype(np.int64), 0, m - 1)
    return ix, iy


def _members_by_region(region_ids: np.ndarray, n_regions: int) -> tuple[np.ndarray, np.ndarray]:
    order = np.argsort(region_ids, kind="stable")
    counts = np.bincount(region_ids, minlength=n_regions)
    offsets = np.concatenate([[0], np.cumsum(counts)])
    return order, offsets


def _rect_diameter(x0: float, y0: float, x1: float, y1: float) -> float:
    # same arithmetic as polygon_diameter on the rect's diagonal vertex pair
    return math.sqrt((x1 - x0) ** 2 + (y1 - y0) ** 2)


def build_ugrid(points: PointSet, bounds: BoundingBox, eps1: float, seed: int) -> RegionSet:
    """Uniform m x m grid with per-cell counts noised by Lap(1/eps1)."""
    if not (eps1 > 0):
        raise InvalidParameter("eps1 must be positive")
    _check_points_in_bounds(points, bounds)
    n = len(points)
    m = ugrid_dims(n, eps1)
    xs = np.linspace(bounds.min_x, bounds.max_x, m + 1)
    ys = np.linspace(bounds.min_y, bounds.max_y, m + 1)

    ix, iy = _grid_assign(points.xy, bounds, m)
    rid = iy * m + ix
    counts = np.bincount(rid, minlength=m * m) if n else np.zeros(m * m, dtype=np.int64)
    order, offsets = _members_by_region(rid, m * m) if n else (np.empty(0, np.int64), np.zeros(m * m + 1, np.int64))

    noise = laplace_samples(1.0 / eps1, m * m, stream(seed, "partition.ugrid"))
    noisy = sanitize_counts(counts + noise)

    regions = []
    for r in range(m * m):
        ry, rx = divmod(r, m)
        rect = (float(xs[rx]), float(ys[ry]), float(xs[rx + 1]), float(ys[ry + 1]))
        mem = order[offsets[r]:offsets[r + 1]]
        regions.append(Region(
            id=r, noisy_count=int(noisy[r]), diameter=_rect_diameter(*rect),
            rect=rect, true_count=int(counts[r]),
            member_indices=mem, member_xy=points.xy[mem],
        ))
    return RegionSet(regions, bounds, "ugrid")


def build_agrid(points: PointSet, bounds: BoundingBox, eps1: float, eps2: float,
                seed: int) -> RegionSet:
    """Two-level adaptive grid.

    Level 1 counts are noised with Lap(1/eps1) and sized by the coarse
    formula; each cell is then split m2 x m2 by its sanitized noisy count,
    re-counted from the real points, and noised with Lap(1/eps2).
    """
    if not (eps1 > 0 and eps2 > 0):
        raise InvalidParameter("eps1 and eps2 must be positive")
    _check_points_in_bounds(points, bounds)
    n = len(points)
    m1 = agrid_level1_dims(n, eps1)
    xs1 = np.linspace(bounds.min_x, bounds.max_x, m1 + 1)
    ys1 = np.linspace(bounds.min_y, bounds.max_y, m1 + 1)
    cw1 = bounds.width / m1
    ch1 = bounds.height / m1

    ix1, iy1 = _grid_assign(points.xy, bounds, m1)
    rid1 = iy1 * m1 + ix1
    counts1 = np.bincount(rid1, minlength=m1 * m1) if n else np.zeros(m1 * m1, dtype=np.int64)
    noise1 = laplace_samples(1.0 / eps1, m1 * m1, stream(seed, "partition.agrid.l1"))
    noisy1 = sanitize_counts(counts1 + noise1)

    m2s = np.array([agrid_level2_dims(int(c), eps2) for c in noisy1])
    l2_offsets = np.concatenate([[0], np.cumsum(m2s * m2s)])
    total = int(l2_offsets[-1])

    if n:
        m2_pt = m2s[rid1]
        cellx0 = bounds.min_x + ix1 * cw1
        celly0 = bounds.min_y + iy1 * ch1
        sx = np.clip(np.floor((points.xy[:, 0] - cellx0) * m2_pt / cw1).astype(np.int64), 0, m2_pt - 1)
        sy = np.clip(np.floor((points.xy[:, 1] - celly0) * m2_pt / ch1).astype(np.int64), 0, m2_pt - 1)
        rid2 = l2_offsets[rid1] + sy * m2_pt + sx
        counts2 = np.bincount(rid2, minlength=total)
        order, offsets = _members_by_region(rid2, total)
    else:
        counts2 = np.zeros(total, dtype=np.int64)
        order, offsets = np.empty(0, np.int64), np.zeros(total + 1, np.int64)

    noise2 = laplace_samples(1.0 / eps2, total, stream(seed, "partition.agrid.l2"))
    noisy2 = sanitize_counts(counts2 + noise2)

    regions = []
    for c1 in range(m1 * m1):
        cy, cx = divmod(c1, m1)
        m2 = int(m2s[c1])
        ex = np.linspace(xs1[cx], xs1[cx + 1], m2 + 1)
        ey = np.linspace(ys1[cy], ys1[cy + 1], m2 + 1)
        base = int(l2_offsets[c1])
        for local in range(m2 * m2):
            ly, lx = divmod(local, m2)
            r = base + local
            rect = (float(ex[lx]), float(ey[ly]), float(ex[lx + 1]), float(ey[ly + 1]))
            mem = order[offsets[r]:offsets[r + 1]]
            regions.append(Region(
                id=r, noisy_count=int(noisy2[r]), diameter=_rect_diameter(*rect),
                rect=rect, true_count=int(counts2[r]),
                member_indices=mem, member_xy=points.xy[mem],
            ))
    return RegionSet(regions, bounds, "agrid")


def sphere_pack_init(bounds: BoundingBox, k: int, rng: np.random.Generator) -> np.ndarray:
    """K starting centroids by dart throwing with a decaying hard-core radius.

    Starts at r0 = 0.7 * sqrt(area / (pi * K)); after 200 consecutive
    rejections the radius decays by 0.95, so exactly K points always come
    out, evenly (but not equally) spaced.
    """
    if k < 1:
        raise InvalidParameter("k must be >= 1")
    r = 0.7 * math.sqrt(bounds.area / (math.pi * k))
    pts = np.empty((k, 2))
    accepted = 0
    rejections = 0
    while accepted < k:
        cand_x = bounds.min_x + rng.random() * bounds.width
        cand_y = bounds.min_y + rng.random() * bounds.height
        if accepted:
            d2 = (pts[:accepted, 0] - cand_x) ** 2 + (pts[:accepted, 1] - cand_y) ** 2
            if d2.min() < r * r:
                rejections += 1
                if rejections >= 200:
                    r *= 0.95
                    rejections = 0
                continue
        pts[accepted] = (cand_x, cand_y)
        accepted += 1
        rejections = 0
    return pts


def _nearest_site(xy: np.ndarray, sites: np.ndarray, chunk: int = 4096) -> np.ndarray:
    """Index of the nearest site per point; exact ties go to the lower index."""
    out = np.empty(len(xy), dtype=np.int64)
    s2 = np.sum(sites ** 2, axis=1)
    for lo in range(0, len(xy), chunk):
        block = xy[lo:lo + chunk]
        d2 = np.sum(block ** 2, axis=1)[:, None] - 2.0 * block @ sites.T + s2[None, :]
        out[lo:lo + chunk] = np.argmin(d2, axis=1)
    return out


def build_cluster(points: PointSet, bounds: BoundingBox, k: int,
                  eps1: float, eps2: float, seed: int) -> RegionSet:
    """EUGKM clustering: sphere-packed centroids refined by weighted k-means
    over noisy grid counts, then Voronoi regions with re-noised counts."""
    if k < 1:
        raise InvalidParameter("k must be >= 1")
    if not (eps1 > 0 and eps2 > 0):
        raise InvalidParameter("eps1 and eps2 must be positive")
    _check_points_in_bounds(points, bounds)
    n = len(points)
    m = ugrid_dims(n, eps1)
    if k > m * m:
        raise InvalidParameter(f"k={k} exceeds the {m * m} grid cells available")

    # noisy grid weights
    ix, iy = _grid_assign(points.xy, bounds, m) if n else (np.empty(0, np.int64),) * 2
    cell_counts = np.bincount(iy * m + ix, minlength=m * m) if n else np.zeros(m * m, np.int64)
    noise = laplace_samples(1.0 / eps1, m * m, stream(seed, "partition.cluster.grid"))
    weights = sanitize_counts(cell_counts + noise).astype(float)

    cxs = bounds.min_x + (np.arange(m) + 0.5) * (bounds.width / m)
    cys = bounds.min_y + (np.arange(m) + 0.5) * (bounds.height / m)
    gx, gy = np.meshgrid(cxs, cys)
    centers = np.column_stack([gx.ravel(), gy.ravel()])

    centroids = sphere_pack_init(bounds, k, stream(seed, "partition.cluster.init"))
    for _ in range(100):
        assign = _nearest_site(centers, centroids)
        wsum = np.bincount(assign, weights=weights, minlength=k)
        xsum = np.bincount(assign, weights=weights * centers[:, 0], minlength=k)
        ysum = np.bincount(assign, weights=weights * centers[:, 1], minlength=k)
        new = centroids.copy()  # empty or zero-weight clusters keep their position
        nz = wsum > 0
        new[nz, 0] = xsum[nz] / wsum[nz]
        new[nz, 1] = ysum[nz] / wsum[nz]
        move = float(np.max(np.linalg.norm(new - centroids, axis=1)))
        centroids = new
        if move < 0.1:
            break

    cells = voronoi_cells(centroids, bounds)
    assign = _nearest_site(points.xy, centroids) if n else np.empty(0, np.int64)
    counts = np.bincount(assign, minlength=k)
    order, offsets = _members_by_region(assign, k) if n else (np.empty(0, np.int64), np.zeros(k + 1, np.int64))

    noise2 = laplace_samples(1.0 / eps2, k, stream(seed, "partition.cluster.regions"))
    noisy = sanitize_counts(counts + noise2)

    regions = []
    for r in range(k):
        mem = order[offsets[r]:offsets[r + 1]]
        regions.append(Region(
            id=r, noisy_count=int(noisy[r]), diameter=polygon_diameter(cells[r]),
            site=centroids[r], true_count=int(counts[r]),
            member_indices=mem, member_xy=points.xy[mem],
            _polygon=cells[r],
        ))
    return RegionSet(regions, bounds, "cluster")
