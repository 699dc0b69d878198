"""Road-network-constrained generation.

Real points are map-matched to their nearest edge; per-edge counts are
noised, normalized to the dataset size, and thresholded; along-edge and
off-edge offsets are summarized by small noisy histograms; synthetic points
are then placed by sampling those histograms and picking a side at random.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .dp_core import Budget, laplace_samples, sanitize_counts
from .errors import InputError, InvalidParameter, InvariantViolation
from .geometry import PointSet, Polygon
from .region_gen import _oob_mask
from .rng import stream

_OOB_RETRY_CAP = 100
_DEGENERATE_EPS = 1e-9
_DEGENERATE_BIN_WIDTH = 0.5  # public fallback width when all offsets are zero
_ZERO_COUNT_D_RANGE = 10.0   # prior off-edge range for edges with no real points


@dataclass
class Edge:
    """A road segment chain with per-run count state.

    true_count is internal and never serialized; noisy_count is the only
    count a consumer may see.
    """

    id: int
    polyline: np.ndarray
    length: float = field(init=False)
    true_count: int = 0
    intermediate: float = 0.0
    noisy_count: int = 0

    def __post_init__(self):
        self.polyline = np.asarray(self.polyline, dtype=float)
        if self.polyline.ndim != 2 or self.polyline.shape[0] < 2 or self.polyline.shape[1] != 2:
            raise InputError(f"edge {self.id}: polyline needs at least two (x, y) vertices")
        deltas = np.diff(self.polyline, axis=0)
        self._seg_len = np.sqrt(np.sum(deltas ** 2, axis=1))
        if np.any(self._seg_len <= 0):
            raise InputError(f"edge {self.id}: zero-length segment")
        self._cum_len = np.concatenate([[0.0], np.cumsum(self._seg_len)])
        self.length = float(self._cum_len[-1])

    def point_at(self, l: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Positions and unit tangents at arc lengths l; at interior vertices
        the earlier segment owns the position."""
        l = np.atleast_1d(np.asarray(l, dtype=float))
        seg = np.clip(np.searchsorted(self._cum_len, l, side="left") - 1, 0, len(self._seg_len) - 1)
        a = self.polyline[seg]
        d = self.polyline[seg + 1] - a
        unit = d / self._seg_len[seg][:, None]
        base = a + (l - self._cum_len[seg])[:, None] * unit
        return base, unit


class RoadGraph:
    """Immutable node/edge geometry; edge count fields change per run."""

    def __init__(self, node_ids, nodes_xy, edges: list[Edge]):
        self.node_ids = list(node_ids)
        self.nodes_xy = np.asarray(nodes_xy, dtype=float).reshape(-1, 2)
        if len(self.node_ids) != len(self.nodes_xy):
            raise InputError("node ids and coordinates differ in length")
        self.edges = sorted(edges, key=lambda e: e.id)
        if len({e.id for e in self.edges}) != len(self.edges):
            raise InputError("duplicate edge ids")
        self._flat = None
        self._sample_tree = None

    def __len__(self) -> int:
        return len(self.edges)

    # -- flattened segment arrays for vectorized matching ------------------
    def _flatten(self):
        if self._flat is None:
            rows_a, rows_d, len2, e_idx, l0, s_ord = [], [], [], [], [], []
            for i, e in enumerate(self.edges):
                for s in range(len(e._seg_len)):
                    rows_a.append(e.polyline[s])
                    rows_d.append(e.polyline[s + 1] - e.polyline[s])
                    len2.append(e._seg_len[s] ** 2)
                    e_idx.append(i)
                    l0.append(e._cum_len[s])
                    s_ord.append(s)
            self._flat = (np.array(rows_a), np.array(rows_d), np.array(len2),
                          np.array(e_idx), np.array(l0), np.array(s_ord))
        return self._flat

    def _samples(self):
        """Points spaced <= delta along every segment, with a KD-tree.

        Any on-edge location is within delta/2 of some sample, which gives
        the exactness radius used by match_points.
        """
        if self._sample_tree is None:
            a, d, len2, e_idx, _, _ = self._flatten()
            seg_len = np.sqrt(len2)
            delta = float(np.clip(np.median(seg_len) / 2.0, 5.0, 50.0))
            pts, owners = [], []
            for s in range(len(a)):
                k = int(math.ceil(seg_len[s] / delta)) + 1
                t = np.linspace(0.0, 1.0, k)
                pts.append(a[s] + t[:, None] * d[s])
                owners.append(np.full(k, s))
            pts = np.concatenate(pts)
            self._sample_tree = (cKDTree(pts), np.concatenate(owners), delta)
        return self._sample_tree


@dataclass(frozen=True)
class MatchResult:
    edge_id: int
    d: float
    l: float


@dataclass
class Matches:
    """Bulk map-match output, aligned with the input point order."""

    edge_index: np.ndarray  # position in graph.edges
    d: np.ndarray
    l: np.ndarray

    def __len__(self) -> int:
        return len(self.edge_index)


def _segment_distance2(px, py, ax, ay, dx, dy, len2):
    """Squared distance to segments plus the clamped projection parameter."""
    t = np.clip(((px - ax) * dx + (py - ay) * dy) / len2, 0.0, 1.0)
    ddx = px - (ax + t * dx)
    ddy = py - (ay + t * dy)
    return ddx * ddx + ddy * ddy, t


def map_match(p, graph: RoadGraph) -> MatchResult:
    """Nearest edge for one point: min point-to-polyline distance over all
    segments, ties broken by lowest edge id (then earliest segment)."""
    if not len(graph.edges):
        raise InputError("graph has no edges")
    a, d, len2, e_idx, l0, s_ord = graph._flatten()
    p = np.asarray(p, dtype=float)
    dist2, t = _segment_distance2(p[0], p[1], a[:, 0], a[:, 1], d[:, 0], d[:, 1], len2)
    best = np.lexsort((s_ord, e_idx, dist2))[0]
    seg_len = math.sqrt(len2[best])
    return MatchResult(edge_id=graph.edges[e_idx[best]].id,
                       d=float(math.sqrt(dist2[best])),
                       l=float(l0[best] + t[best] * seg_len))


def match_points(points: PointSet, graph: RoadGraph) -> Matches:
    """Vectorized map_match for a whole point set.

    A KD-tree over along-edge samples bounds the search: the nearest sample
    at distance d0 guarantees the true nearest edge has a sample within
    d0 + delta/2, so only candidate segments inside that ball need exact
    distances. Results are identical to map_match per point.
    """
    if not len(graph.edges):
        raise InputError("graph has no edges")
    n = len(points)
    if n == 0:
        return Matches(np.empty(0, np.int64), np.empty(0), np.empty(0))
    a, d, len2, e_idx, l0, s_ord = graph._flatten()
    tree, owners, delta = graph._samples()
    xy = points.xy

    d0, _ = tree.query(xy)
    cand_lists = tree.query_ball_point(xy, d0 + 0.5 * delta + 1e-9)

    pt_rep = np.concatenate([np.full(len(c), i) for i, c in enumerate(cand_lists)])
    seg_rep = owners[np.concatenate([np.asarray(c, dtype=np.int64) for c in cand_lists])]
    pair_key = pt_rep * len(a) + seg_rep
    uniq = np.unique(pair_key)
    pi = uniq // len(a)
    si = uniq % len(a)

    dist2, t = _segment_distance2(xy[pi, 0], xy[pi, 1], a[si, 0], a[si, 1],
                                  d[si, 0], d[si, 1], len2[si])
    order = np.lexsort((s_ord[si], e_idx[si], dist2, pi))
    first = np.concatenate([[True], pi[order][1:] != pi[order][:-1]])
    win = order[first]
    if len(win) != n:
        raise InvariantViolation("candidate search missed a point")

    out_e = e_idx[si[win]]
    out_d = np.sqrt(dist2[win])
    out_l = l0[si[win]] + t[win] * np.sqrt(len2[si[win]])
    return Matches(out_e.astype(np.int64), out_d, out_l)


def threshold(eps1: float, F: float = 0.9) -> float:
    """Noisy-count cutoff theta = min(-ln(2 - 2F)/eps1, 10)."""
    if not (0.5 <= F < 1.0):
        raise InvalidParameter(f"F must lie in [0.5, 1), got {F}")
    if not (eps1 > 0):
        raise InvalidParameter("eps1 must be positive")
    return min(-math.log(2.0 - 2.0 * F) / eps1, 10.0)


def noisy_edge_counts(graph: RoadGraph, matches: Matches, n_points: int,
                      eps1: float, F: float, rng: np.random.Generator) -> RoadGraph:
    """Set per-edge noisy counts: Laplace-noise each true count, normalize
    the noisy total back to n_points, sanitize, then zero counts <= theta."""
    n_edges = len(graph.edges)
    true = np.bincount(matches.edge_index, minlength=n_edges).astype(np.int64)
    inter = true + laplace_samples(1.0 / eps1, n_edges, rng)
    total = float(inter.sum())
    if total > 0:
        noisy = sanitize_counts(n_points * inter / total)
    else:
        noisy = sanitize_counts(inter)
    theta = threshold(eps1, F)
    noisy[noisy <= theta] = 0
    for e, t, i, nc in zip(graph.edges, true, inter, noisy):
        e.true_count = int(t)
        e.intermediate = float(i)
        e.noisy_count = int(nc)
    return graph


def bins_for(n: int) -> int:
    """Histogram bin count alpha = max(1, round(sqrt(n)))."""
    if n < 0:
        raise InvalidParameter("count must be nonnegative")
    return max(1, int(math.floor(math.sqrt(n) + 0.5)))


@dataclass
class NoisyHistogram:
    """Fixed-bound histogram with sanitized noisy bin counts."""

    lo: float
    hi: float
    alpha: int
    counts: np.ndarray

    def __post_init__(self):
        if not (self.hi > self.lo):
            raise InvalidParameter("histogram needs hi > lo")
        if self.alpha < 1:
            raise InvalidParameter("histogram needs alpha >= 1")
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if len(self.counts) != self.alpha or np.any(self.counts < 0):
            raise InvalidParameter("histogram needs alpha nonnegative counts")


def build_noisy_histogram(values, lo: float, hi: float, alpha: int, eps: float,
                          rng: np.random.Generator) -> NoisyHistogram:
    """Equal-width bins over [lo, hi]; values are clipped into range and a
    value exactly at hi lands in the last bin. Per-bin counts get Lap(1/eps)
    noise and are sanitized."""
    if not (eps > 0):
        raise InvalidParameter("eps must be positive")
    values = np.clip(np.asarray(values, dtype=float), lo, hi)
    width = (hi - lo) / alpha
    idx = np.minimum((np.floor((values - lo) / width)).astype(np.int64), alpha - 1)
    counts = np.bincount(idx, minlength=alpha) if len(values) else np.zeros(alpha, np.int64)
    noisy = sanitize_counts(counts + laplace_samples(1.0 / eps, alpha, rng))
    return NoisyHistogram(lo, hi, alpha, noisy)


def histogram_sample(hist: NoisyHistogram, rng: np.random.Generator,
                     size: int | None = None):
    """Draw from the histogram: bin chosen by noisy count, value uniform in
    the bin. All-zero counts fall back to uniform over [lo, hi]."""
    n = 1 if size is None else int(size)
    width = (hist.hi - hist.lo) / hist.alpha
    total = hist.counts.sum()
    if total > 0:
        bins = rng.choice(hist.alpha, size=n, p=hist.counts / total)
        out = hist.lo + (bins + rng.random(n)) * width
    else:
        out = hist.lo + rng.random(n) * (hist.hi - hist.lo)
    return float(out[0]) if size is None else out


def generate_edge(edge: Edge, l_hist: NoisyHistogram, d_hist: NoisyHistogram,
                  rng: np.random.Generator, oob: list[Polygon] | None = None):
    """noisy_count points along the edge: arc length from l_hist, offset from
    d_hist on a fair-coin side, along the local segment normal."""
    n = edge.noisy_count
    if n <= 0:
        return np.empty((0, 2)), 0
    oob = oob or []
    out = np.empty((n, 2))
    ok = np.zeros(n, dtype=bool)
    pending = np.arange(n)
    for _ in range(_OOB_RETRY_CAP):
        k = len(pending)
        l = histogram_sample(l_hist, rng, size=k)
        d = histogram_sample(d_hist, rng, size=k)
        side = rng.integers(0, 2, size=k) * 2 - 1
        base, unit = edge.point_at(l)
        normal = np.column_stack([-unit[:, 1], unit[:, 0]])
        pts = base + (d * side)[:, None] * normal
        bad = _oob_mask(pts, oob) if oob else np.zeros(k, dtype=bool)
        good = ~bad
        out[pending[good]] = pts[good]
        ok[pending[good]] = True
        pending = pending[bad]
        if pending.size == 0:
            break
    return out[ok], int(pending.size)


@dataclass
class RoadReport:
    requested: int = 0
    emitted: int = 0
    skipped: int = 0
    theta: float = 0.0
    active_edges: int = 0
    warnings: list[str] = field(default_factory=list)


def generate_road(graph: RoadGraph, points: PointSet, budget: Budget,
                  F: float = 0.9, d_max: float = 50.0,
                  oob: list[Polygon] | None = None, seed: int = 0,
                  workers: int = 1, matches: Matches | None = None):
    """Full road pipeline: map-match, noisy thresholded edge counts (eps1),
    then per-edge micro-histograms for l (eps2) and d (eps3) feeding
    generate_edge. Edges with no real points fall back to uniform priors:
    l over (0, |e|) and d over (0, 10) m."""
    if d_max <= 0:
        raise InvalidParameter("d_max must be positive")
    oob = oob or []
    if matches is None:
        matches = match_points(points, graph)
    if len(matches) != len(points):
        raise InputError("matches must cover all points")
    noisy_edge_counts(graph, matches, len(points), budget.eps1, F,
                      stream(seed, "road.counts"))

    order = np.argsort(matches.edge_index, kind="stable")
    counts = np.bincount(matches.edge_index, minlength=len(graph.edges))
    offsets = np.concatenate([[0], np.cumsum(counts)])
    l_sorted = matches.l[order]
    d_sorted = matches.d[order]

    def work(i_edge: int):
        edge = graph.edges[i_edge]
        if edge.noisy_count <= 0:
            return np.empty((0, 2)), 0
        rng = stream(seed, "road.edge", edge.id)
        alpha = bins_for(edge.noisy_count)
        ls = l_sorted[offsets[i_edge]:offsets[i_edge + 1]]
        ds = d_sorted[offsets[i_edge]:offsets[i_edge + 1]]
        if edge.true_count == 0:
            l_hist = NoisyHistogram(0.0, edge.length, 1, np.array([1]))
            d_hist = NoisyHistogram(0.0, _ZERO_COUNT_D_RANGE, 1, np.array([1]))
        else:
            l_hist = build_noisy_histogram(ls, 0.0, edge.length, alpha, budget.eps2, rng)
            if ds.max() <= _DEGENERATE_EPS:
                # perfectly aligned data: single public bin keeps offsets tiny
                d_hist = build_noisy_histogram(ds, 0.0, _DEGENERATE_BIN_WIDTH, 1,
                                               budget.eps3, rng)
            else:
                d_hist = build_noisy_histogram(ds, 0.0, d_max, alpha, budget.eps3, rng)
        return generate_edge(edge, l_hist, d_hist, rng, oob)

    idxs = range(len(graph.edges))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, idxs))
    else:
        results = [work(i) for i in idxs]

    report = RoadReport(requested=int(sum(e.noisy_count for e in graph.edges)),
                        theta=threshold(budget.eps1, F),
                        active_edges=int(sum(e.noisy_count > 0 for e in graph.edges)))
    chunks = []
    for edge, (xy, sk) in zip(graph.edges, results):
        chunks.append(xy)
        report.skipped += sk
        if sk:
            report.warnings.append(f"edge {edge.id}: skipped {sk} points")
    out = np.concatenate(chunks) if chunks else np.empty((0, 2))
    report.emitted = len(out)
    if report.emitted + report.skipped != report.requested:
        raise InvariantViolation("emitted + skipped != requested")
    return PointSet(out, kind="synthetic"), report
