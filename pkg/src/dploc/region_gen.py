"""Synthetic point generation inside partition regions.

Three generators share the out-of-bounds rejection machinery:

* uniform: triangle-picking over the region, no extra budget (eps3 = 0);
* WUD: sub-divide the region, allocate the noisy count across sub-regions
  by blending area share with neighboring noisy counts, fill uniformly
  (post-processing only, eps3 = 0);
* KDE: polar-Laplace kernel around real member points with a per-point
  sampling cap lambda, consuming eps3.
"""

from __future__ import annotations

import math
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .dp_core import Budget
from .errors import InvalidParameter, InvalidRegion, InvariantViolation
from .geometry import (
    PointSet, Polygon, Triangle, point_in_polygon, points_in_polygon,
    polygon_sample, sample_rect, _sample_triangles,
)
from .partition import Region, RegionSet
from .rng import stream

_UNIFORM_RETRY_CAP = 1000
_KERNEL_RETRY_CAP = 50
_REL_TOL = 1e-12


def _oob_mask(xy: np.ndarray, oob: list[Polygon]) -> np.ndarray:
    """True where a point falls inside any out-of-bounds polygon."""
    mask = np.zeros(len(xy), dtype=bool)
    for poly in oob:
        todo = ~mask
        if not todo.any():
            break
        mask[todo] |= points_in_polygon(xy[todo], poly)
    return mask


def _point_in_oob(p: np.ndarray, oob: list[Polygon]) -> bool:
    return any(point_in_polygon(p, poly) for poly in oob)


def _fill_uniform(shape, n: int, oob: list[Polygon], rng: np.random.Generator):
    """n uniform points in a rect or Polygon, rejecting out-of-bounds ones.

    Each point gets up to 1000 attempts; exhausted points are skipped and
    counted. Returns (accepted_xy, skipped).
    """
    if n <= 0:
        return np.empty((0, 2)), 0

    def draw(k):
        if isinstance(shape, tuple):
            return sample_rect(shape, k, rng)
        return polygon_sample(shape, rng, size=k)

    out = np.empty((n, 2))
    ok = np.zeros(n, dtype=bool)
    pending = np.arange(n)
    for _ in range(_UNIFORM_RETRY_CAP):
        batch = draw(len(pending))
        bad = _oob_mask(batch, oob) if oob else np.zeros(len(batch), dtype=bool)
        good = ~bad
        out[pending[good]] = batch[good]
        ok[pending[good]] = True
        pending = pending[bad]
        if pending.size == 0:
            break
    return out[ok], int(pending.size)


def gen_uniform(region: Region, oob: list[Polygon], rng: np.random.Generator):
    """Exactly noisy_count uniform points in the region (minus reported skips)."""
    shape = region.rect if region.rect is not None else region.polygon
    return _fill_uniform(shape, region.noisy_count, oob, rng)


# ---------------------------------------------------------------------------
# weighted uniform distribution

@dataclass
class WudAllocation:
    """Integer point allocation across a region's sub-regions."""

    areas: np.ndarray
    neighbor_counts: np.ndarray
    omega: float
    fractional: np.ndarray
    allocated: np.ndarray


def wud_allocate(noisy_count: int, areas, neighbor_counts, omega: float) -> WudAllocation:
    """Split noisy_count across sub-regions by omega * area share plus
    (1 - omega) * neighbor-count share, then round by largest remainder so
    the integer counts sum exactly to noisy_count.

    A zero total neighbor count falls back to area-only weights.
    """
    areas = np.asarray(areas, dtype=float)
    neighbor_counts = np.asarray(neighbor_counts, dtype=float)
    if np.any(areas <= 0):
        raise InvalidParameter("sub-region areas must be positive")
    if np.any(neighbor_counts < 0):
        raise InvalidParameter("neighbor counts must be nonnegative")
    if not (0.0 <= omega <= 1.0):
        raise InvalidParameter("omega must lie in [0, 1]")

    area_share = areas / areas.sum()
    x_total = neighbor_counts.sum()
    if x_total > 0:
        frac = noisy_count * (omega * area_share + (1.0 - omega) * neighbor_counts / x_total)
    else:
        frac = noisy_count * area_share

    base = np.floor(frac).astype(np.int64)
    deficit = int(noisy_count - base.sum())
    remainders = frac - base
    # largest remainder first; ties broken by sub-region index
    order = np.lexsort((np.arange(len(frac)), -remainders))
    alloc = base.copy()
    alloc[order[:deficit]] += 1
    return WudAllocation(areas, neighbor_counts, omega, frac, alloc)


_QUANT = 1e6  # grid lines quantized to micrometers for adjacency lookups


def _qk(v: float) -> int:
    return round(v * _QUANT)


class _GridAdjacency:
    """Index of rectangular regions by their edge lines, for neighbor sums."""

    def __init__(self, region_set: RegionSet):
        self.left = defaultdict(list)
        self.right = defaultdict(list)
        self.bottom = defaultdict(list)
        self.top = defaultdict(list)
        self.counts = np.array([r.noisy_count for r in region_set.regions], dtype=float)
        for i, r in enumerate(region_set.regions):
            x0, y0, x1, y1 = r.rect
            self.left[_qk(x0)].append((i, y0, y1))
            self.right[_qk(x1)].append((i, y0, y1))
            self.bottom[_qk(y0)].append((i, x0, x1))
            self.top[_qk(y1)].append((i, x0, x1))

    def _sum(self, index, key: float, lo: float, hi: float, exclude: int) -> float:
        total = 0.0
        for i, a, b in index.get(_qk(key), ()):
            if i != exclude and min(b, hi) - max(a, lo) > 1e-9:
                total += self.counts[i]
        return total

    def quadrant_neighbor_count(self, region_idx: int, rect, quadrant) -> float:
        """Sum of noisy counts of regions edge-adjacent to the quadrant's
        outer boundary (one or two cells in a uniform grid)."""
        x0, y0, x1, y1 = rect
        qx0, qy0, qx1, qy1 = quadrant
        total = 0.0
        if qx0 == x0:  # west outer edge: neighbors whose right edge abuts it
            total += self._sum(self.right, x0, qy0, qy1, region_idx)
        if qx1 == x1:
            total += self._sum(self.left, x1, qy0, qy1, region_idx)
        if qy0 == y0:
            total += self._sum(self.top, y0, qx0, qx1, region_idx)
        if qy1 == y1:
            total += self._sum(self.bottom, y1, qx0, qx1, region_idx)
        return total


class _WudContext:
    """Per-RegionSet lookup state shared across regions (built once)."""

    def __init__(self, region_set: RegionSet):
        self.region_set = region_set
        self.grid = _GridAdjacency(region_set) if region_set.method in ("ugrid", "agrid") else None
        if region_set.method == "cluster":
            self.sites = region_set.sites()
            self.site_tree = cKDTree(self.sites)
            self.counts = np.array([r.noisy_count for r in region_set.regions], dtype=float)


def _quadrants(rect) -> list[tuple[float, float, float, float]]:
    x0, y0, x1, y1 = rect
    cx, cy = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
    return [(x0, y0, cx, cy), (cx, y0, x1, cy), (x0, cy, cx, y1), (cx, cy, x1, y1)]


def wud_plan(region: Region, ctx: _WudContext):
    """Sub-divide a region and gather neighbor noisy counts per sub-region.

    Grid cells split into their four quadrants, neighbors being the edge-
    adjacent cells on each quadrant's outer boundary. Voronoi cells split
    into centroid-fan triangles, the neighbor being the region whose site
    is nearest to the triangle's outer-edge midpoint (excluding itself).
    """
    if region.rect is not None:
        quads = _quadrants(region.rect)
        shapes = quads
        areas = [(q[2] - q[0]) * (q[3] - q[1]) for q in quads]
        xs = [ctx.grid.quadrant_neighbor_count(region.id, region.rect, q) for q in quads]
        return shapes, np.array(areas), np.array(xs)

    poly = region.polygon
    c = poly.centroid
    v = poly.vertices
    shapes, areas, xs = [], [], []
    for k in range(len(v)):
        a, b = v[k], v[(k + 1) % len(v)]
        tri = Triangle(c, a, b)
        mid = 0.5 * (a + b)
        _, idx = ctx.site_tree.query(mid, k=min(2, len(ctx.sites)))
        idx = np.atleast_1d(idx)
        neighbor = next((int(j) for j in idx if int(j) != region.id), None)
        shapes.append(tri)
        areas.append(max(tri.signed_area, 1e-300))
        xs.append(ctx.counts[neighbor] if neighbor is not None else 0.0)
    return shapes, np.array(areas), np.array(xs)


def gen_wud(region: Region, ctx: _WudContext, oob: list[Polygon],
            omega: float, rng: np.random.Generator):
    """Fill a region sub-region by sub-region according to the WUD allocation."""
    if region.noisy_count <= 0:
        return np.empty((0, 2)), 0
    shapes, areas, xs = wud_plan(region, ctx)
    alloc = wud_allocate(region.noisy_count, areas, xs, omega)
    chunks = []
    skipped = 0
    for shape, count in zip(shapes, alloc.allocated):
        if count == 0:
            continue
        if isinstance(shape, Triangle):
            pts, sk = _fill_triangle(shape, int(count), oob, rng)
        else:
            pts, sk = _fill_uniform(shape, int(count), oob, rng)
        chunks.append(pts)
        skipped += sk
    xy = np.concatenate(chunks) if chunks else np.empty((0, 2))
    return xy, skipped


def _fill_triangle(tri: Triangle, n: int, oob: list[Polygon], rng: np.random.Generator):
    out = np.empty((n, 2))
    ok = np.zeros(n, dtype=bool)
    pending = np.arange(n)
    a = np.broadcast_to(tri.a, (n, 2))
    b = np.broadcast_to(tri.b, (n, 2))
    c = np.broadcast_to(tri.c, (n, 2))
    for _ in range(_UNIFORM_RETRY_CAP):
        k = len(pending)
        batch = _sample_triangles(a[:k], b[:k], c[:k], k, rng)
        bad = _oob_mask(batch, oob) if oob else np.zeros(k, dtype=bool)
        good = ~bad
        out[pending[good]] = batch[good]
        ok[pending[good]] = True
        pending = pending[bad]
        if pending.size == 0:
            break
    return out[ok], int(pending.size)


# ---------------------------------------------------------------------------
# lambda-capped private KDE

@dataclass
class KdeRegionState:
    """Kernel bandwidth plus per-member draw counters for one region."""

    h: float
    eps_star: float
    lam: int
    counters: np.ndarray
    _uncapped: np.ndarray = field(repr=False, default_factory=lambda: np.empty(0, np.int64))
    _n_uncapped: int = 0


def kde_smoothing(region: Region, eps3: float, lam: int) -> KdeRegionState:
    """Bandwidth h = diameter / eps* with eps* = eps3 / lambda, counters zeroed."""
    if not (eps3 > 0):
        raise InvalidParameter("eps3 must be positive for KDE generation")
    if lam < 1:
        raise InvalidParameter("lambda must be a positive integer")
    if not (region.diameter > 0):
        raise InvalidRegion(f"region {region.id} has zero diameter")
    eps_star = eps3 / lam
    h = region.diameter / eps_star
    k = len(region.member_xy)
    return KdeRegionState(h=h, eps_star=eps_star, lam=lam,
                          counters=np.zeros(k, dtype=np.int64),
                          _uncapped=np.arange(k, dtype=np.int64), _n_uncapped=k)


def _inside_region(x: float, y: float, region: Region) -> bool:
    if region.rect is not None:
        x0, y0, x1, y1 = region.rect
        return x0 <= x <= x1 and y0 <= y <= y1
    # partition polygons are convex (Voronoi cells), so the half-plane form
    # is exact and much cheaper than the general crossing test
    A, b = region.polygon.convex_halfplanes()
    return bool(np.all(A[:, 0] * x + A[:, 1] * y <= b + 1e-9))


def kde_sample(region: Region, state: KdeRegionState, oob: list[Polygon],
               rng: np.random.Generator):
    """One synthetic point from the region's private KDE.

    Picks a member uniformly among those still below the cap, charges the
    draw to its counter (rejected draws included), and displaces it by an
    exponential radius (scale h) at a uniform angle. Falls back to a uniform
    point when every member is capped, when the region has no members, or
    after 50 rejected kernel draws. Returns None only if even the uniform
    fallback cannot place a point (region fully covered by out-of-bounds).
    """
    p = _kernel_attempt(region, state, oob, rng)
    if p is not None:
        return p
    pts, skipped = _fill_uniform(
        region.rect if region.rect is not None else region.polygon, 1, oob, rng)
    return None if skipped else pts[0]


def _kernel_attempt(region: Region, state: KdeRegionState, oob: list[Polygon],
                    rng: np.random.Generator):
    xy = region.member_xy
    for _ in range(_KERNEL_RETRY_CAP):
        if state._n_uncapped == 0:
            return None
        slot = int(rng.integers(state._n_uncapped))
        member = state._uncapped[slot]
        state.counters[member] += 1
        if state.counters[member] >= state.lam:
            state._n_uncapped -= 1
            state._uncapped[slot] = state._uncapped[state._n_uncapped]
        r = rng.standard_exponential() * state.h
        theta = rng.random() * (2.0 * math.pi)
        x = xy[member, 0] + r * math.cos(theta)
        y = xy[member, 1] + r * math.sin(theta)
        if _inside_region(x, y, region) and not (oob and _point_in_oob(np.array([x, y]), oob)):
            return np.array([x, y])
    return None


def _gen_kde_region(region: Region, eps3: float, lam: int, oob: list[Polygon],
                    rng: np.random.Generator):
    n = region.noisy_count
    state = kde_smoothing(region, eps3, lam)
    if n <= 0:
        return np.empty((0, 2)), 0, state
    out = np.empty((n, 2))
    filled = 0
    skipped = 0
    shape = region.rect if region.rect is not None else region.polygon
    while filled + skipped < n:
        if state._n_uncapped == 0:
            # members exhausted (or none): remaining points are uniform
            rest, sk = _fill_uniform(shape, n - filled - skipped, oob, rng)
            out[filled:filled + len(rest)] = rest
            filled += len(rest)
            skipped += sk
            break
        p = _kernel_attempt(region, state, oob, rng)
        if p is None:
            p1, sk = _fill_uniform(shape, 1, oob, rng)
            if sk:
                skipped += 1
            else:
                out[filled] = p1[0]
                filled += 1
        else:
            out[filled] = p
            filled += 1
    return out[:filled], skipped, state


def _check_kde_invariants(region: Region, state: KdeRegionState, eps3: float) -> None:
    """Kernel privacy ratio and sampling-cap audit; violations are bugs."""
    if abs(region.diameter / state.h - state.eps_star) > _REL_TOL * state.eps_star:
        raise InvariantViolation(f"region {region.id}: diameter/h != eps*")
    if abs(state.lam * state.eps_star - eps3) > _REL_TOL * eps3:
        raise InvariantViolation(f"region {region.id}: lambda * eps* != eps3")
    if len(state.counters) and int(state.counters.max()) > state.lam:
        raise InvariantViolation(f"region {region.id}: sampling cap exceeded")


@dataclass
class GenReport:
    requested: int = 0
    emitted: int = 0
    skipped: int = 0
    max_kernel_draws: int = 0
    warnings: list[str] = field(default_factory=list)


def generate_regions(region_set: RegionSet, gen_method: str, budget: Budget,
                     oob: list[Polygon] | None, seed: int,
                     lam: int = 2, omega: float = 0.5, workers: int = 1):
    """Generate noisy_count points per region and concatenate in region order.

    Every region draws from its own stream keyed by region id, so output is
    byte-identical for any worker count.
    """
    method = gen_method.lower()
    if method not in ("uniform", "wud", "kde"):
        raise InvalidParameter(f"unknown generation method {gen_method!r}")
    oob = oob or []
    ctx = _WudContext(region_set) if method == "wud" else None

    def work(region: Region):
        rng = stream(seed, "generate", region.id)
        if method == "uniform":
            xy, sk = gen_uniform(region, oob, rng)
            return xy, sk, 0
        if method == "wud":
            xy, sk = gen_wud(region, ctx, oob, omega, rng)
            return xy, sk, 0
        xy, sk, state = _gen_kde_region(region, budget.eps3, lam, oob, rng)
        _check_kde_invariants(region, state, budget.eps3)
        draws = int(state.counters.max()) if len(state.counters) else 0
        return xy, sk, draws

    regions = region_set.regions
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, regions))
    else:
        results = [work(r) for r in regions]

    report = GenReport(requested=region_set.total_noisy_count())
    chunks = []
    for region, (xy, sk, draws) in zip(regions, results):
        chunks.append(xy)
        report.skipped += sk
        report.max_kernel_draws = max(report.max_kernel_draws, draws)
        if sk:
            report.warnings.append(
                f"region {region.id}: skipped {sk} points (out-of-bounds rejection cap)")
    out = np.concatenate(chunks) if chunks else np.empty((0, 2))
    report.emitted = len(out)
    if report.emitted + report.skipped != report.requested:
        raise InvariantViolation("emitted + skipped != requested")
    return PointSet(out, kind="synthetic"), report
