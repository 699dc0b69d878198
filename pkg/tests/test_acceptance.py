"""Acceptance suite: one test per criterion, each printing a PASS line with
the numbers that justify it. Tolerances are fixed here, not tuned at runtime.
"""

import math

import numpy as np
import pytest
from scipy.stats import chisquare

from dploc import dp_core
from dploc.dp_core import laplace_quantile, laplace_samples, resolve_budget
from dploc.evaluation import flq_sdc, hotspot_sdc, medd, nce, range_mae
from dploc.geometry import (
    BoundingBox, PointSet, Polygon, Triangle, points_in_polygon,
    polygon_sample, triangle_sample, voronoi_cells,
)
from dploc.partition import (
    Region, build_cluster, build_ugrid, ugrid_dims,
)
from dploc.pipeline import RunConfig, eval_locations, run, save_graph_json, save_points_csv
from dploc.region_gen import KdeRegionState, generate_regions, kde_sample, kde_smoothing
from dploc.roadnet import (
    bins_for, build_noisy_histogram, generate_road, match_points, threshold,
)
from dploc.rng import stream
from dploc.testbed import CitySpec, dataset_bounds, generate_city
from dploc.geometry import LocalProjection

ALL_METHODS = ["UGrid-Uni", "UGrid-WUD", "UGrid-KDE",
               "AGrid-Uni", "AGrid-WUD", "AGrid-KDE",
               "Clust-Uni", "Clust-WUD", "Clust-KDE", "Road"]
KDE_METHODS = ["UGrid-KDE", "AGrid-KDE", "Clust-KDE", "Road"]
FIXTURE_K = 100  # Clust fixture cluster count; 1000 exceeds the eps=0.1 grid


def _passed(criterion, detail):
    print(f"[acceptance] criterion {criterion}: PASS  ({detail})")


def generate_with(method, eps, seed, graph, points, bounds, matches, k=FIXTURE_K,
                  lam=2, oob=None):
    """One synthetic run of any method on a prebuilt fixture."""
    from dploc.partition import build_agrid
    from dploc.dp_core import Method
    budget = resolve_budget(method, eps)
    m = Method.parse(method)
    if m is Method.ROAD:
        synth, report = generate_road(graph, points, budget, seed=seed, matches=matches)
        return synth, report
    if m.partition == "ugrid":
        rs = build_ugrid(points, bounds, budget.eps1, seed)
    elif m.partition == "agrid":
        rs = build_agrid(points, bounds, budget.eps1, budget.eps2, seed)
    else:
        rs = build_cluster(points, bounds, k, budget.eps1, budget.eps2, seed)
    synth, report = generate_regions(rs, m.generator, budget, oob, seed, lam=lam)
    return synth, report


class TestCriterion01FormulaExactness:
    def test_formulas(self):
        assert ugrid_dims(163220, 1.0) == 128
        assert threshold(0.5, 0.9) == pytest.approx(3.21888, abs=1e-4)
        assert threshold(0.1, 0.9) == 10.0
        for eps in (0.1, 0.5, 1.0, 3.0, 10.0):
            assert laplace_quantile(0.0, 0.5, eps) == 0.0
        assert bins_for(400) == 20
        _passed(1, "grid dims, threshold, quantile median, bin rule all exact")


class TestCriterion02KernelPrivacyRatio:
    def test_ratio_identity_for_every_region(self):
        rng = stream(41, "acc.c2")
        pts = PointSet(rng.random((4000, 2)) * 1000)
        bounds = BoundingBox(0, 0, 1000, 1000)
        checked = 0
        for builder in ("ugrid", "cluster"):
            if builder == "ugrid":
                budget = resolve_budget("UGrid-KDE", 1.0)
                rs = build_ugrid(pts, bounds, budget.eps1, seed=41)
            else:
                budget = resolve_budget("Clust-KDE", 1.0)
                rs = build_cluster(pts, bounds, 15, budget.eps1, budget.eps2, seed=41)
            lam = 2
            for region in rs.regions:
                state = kde_smoothing(region, budget.eps3, lam)
                eps_star = state.eps_star
                assert abs(region.diameter / state.h - eps_star) <= 1e-12 * eps_star
                assert abs(lam * eps_star - budget.eps3) <= 1e-12 * budget.eps3
                # pdf ratio between the two most distal points
                ratio = math.exp(region.diameter / state.h)
                assert ratio <= math.exp(budget.eps3) * (1 + 1e-12)
                checked += 1
            # a full run re-asserts the identities internally per region
            generate_regions(rs, "kde", budget, None, seed=41, lam=lam)
        _passed(2, f"diameter/h = eps* and lam*eps* = eps3 for {checked} regions")


class TestCriterion03LambdaCapAudit:
    def test_full_kde_run_100k(self):
        spec = CitySpec(rows=30, cols=30, spacing=100.0, points_per_edge=57.5,
                        seed=303)
        graph, pts = generate_city(spec)
        assert len(pts) >= 100_000
        bounds = dataset_bounds(pts, graph)
        budget = resolve_budget("UGrid-KDE", 1.0)
        rs = build_ugrid(pts, bounds, budget.eps1, seed=303)
        synth, report = generate_regions(rs, "kde", budget, None, seed=303, lam=2)
        assert report.max_kernel_draws <= 2
        assert len(synth) == rs.total_noisy_count()
        _passed(3, f"{len(pts)} real points, max kernel draws per point "
                   f"= {report.max_kernel_draws} <= 2")


class TestCriterion04HistogramBinTheorem:
    L = 1000.0
    N = 2500
    ALPHAS = (1, 2, 5, 10, 25, 50, 100, 250)

    def _values(self, seed):
        rng = stream(seed, "acc.theorem2.data")
        heavy = rng.random(self.N) < 0.7
        l = np.where(heavy,
                     rng.normal(0.30 * self.L, 0.04 * self.L, self.N),
                     rng.normal(0.72 * self.L, 0.07 * self.L, self.N))
        return np.clip(l, 0.0, self.L)

    @staticmethod
    def _estimate(hist, a, b):
        width = (hist.hi - hist.lo) / hist.alpha
        edges = hist.lo + width * np.arange(hist.alpha + 1)
        lo = np.clip(a, edges[:-1], edges[1:])
        hi = np.clip(b, edges[:-1], edges[1:])
        return float(np.sum(hist.counts * (hi - lo) / width))

    def test_optimal_alpha_near_sqrt_n(self):
        errs = {a: [] for a in self.ALPHAS}
        for s in range(20):
            values = self._values(s)
            queries = np.sort(stream(s, "acc.theorem2.queries").random((200, 2)) * self.L, axis=1)
            for alpha in self.ALPHAS:
                h = build_noisy_histogram(values, 0.0, self.L, alpha, 1.0,
                                          stream(s, f"acc.theorem2.h{alpha}"))
                total = 0.0
                for a, b in queries:
                    true = int(np.sum((values >= a) & (values <= b)))
                    total += abs(self._estimate(h, a, b) - true)
                errs[alpha].append(total / len(queries))
        medians = {a: float(np.median(v)) for a, v in errs.items()}
        best = min(medians, key=medians.get)
        lo, hi = math.sqrt(self.N) / 4.0, 4.0 * math.sqrt(self.N)
        assert lo <= best <= hi, f"argmin alpha {best} outside [{lo}, {hi}]: {medians}"
        _passed(4, f"median range error minimized at alpha={best}, "
                   f"inside [{lo:.1f}, {hi:.0f}] (sqrt(N)={math.sqrt(self.N):.0f})")


class TestCriterion05OracleEquivalence:
    def test_grid_region_edge_and_matching_oracles(self):
        rng = stream(51, "acc.c5")
        bounds = BoundingBox(0, 0, 1000, 1000)
        pts = PointSet(rng.random((10_000, 2)) * 1000)

        # uniform grid cells against direct interval membership
        with dp_core.zero_noise():
            rs = build_ugrid(pts, bounds, 1.0, seed=51)
        m = ugrid_dims(len(pts), 1.0)
        xs = np.linspace(0, 1000, m + 1)
        x, y = pts.xy[:, 0], pts.xy[:, 1]
        for region in rs.regions:
            ry, rx = divmod(region.id, m)
            in_x = (x >= xs[rx]) & ((x < xs[rx + 1]) | ((rx == m - 1) & (x <= xs[rx + 1])))
            in_y = (y >= xs[ry]) & ((y < xs[ry + 1]) | ((ry == m - 1) & (y <= xs[ry + 1])))
            assert region.noisy_count == int(np.sum(in_x & in_y))

        # cluster regions against nearest-centroid assignment
        with dp_core.zero_noise():
            rc = build_cluster(pts, bounds, 40, 1.0, 1.0, seed=51)
        sites = rc.sites()
        d2 = np.sum((pts.xy[:, None] - sites[None, :]) ** 2, axis=-1)
        oracle_counts = np.bincount(np.argmin(d2, axis=1), minlength=40)
        assert [r.noisy_count for r in rc.regions] == list(oracle_counts)

        # map matching against the all-segments oracle
        spec = CitySpec(rows=10, cols=10, spacing=100.0, points_per_edge=0.0, seed=52)
        graph, _ = generate_city(spec)
        qpts = PointSet(np.column_stack([rng.random(10_000) * 950 - 25,
                                         rng.random(10_000) * 950 - 25]))
        bulk = match_points(qpts, graph)
        flat = graph._flatten()
        a, dvec, len2, e_idx, l0, s_ord = flat
        for i in range(len(qpts)):
            px, py = qpts.xy[i]
            t = np.clip(((px - a[:, 0]) * dvec[:, 0] + (py - a[:, 1]) * dvec[:, 1]) / len2, 0, 1)
            dd2 = (px - (a[:, 0] + t * dvec[:, 0])) ** 2 + (py - (a[:, 1] + t * dvec[:, 1])) ** 2
            best = np.lexsort((s_ord, e_idx, dd2))[0]
            assert bulk.edge_index[i] == e_idx[best]
            assert abs(bulk.d[i] - math.sqrt(dd2[best])) <= 1e-6
            assert abs(bulk.l[i] - (l0[best] + t[best] * math.sqrt(len2[best]))) <= 1e-6

        # per-edge counts with noise off equal brute-force nearest-edge counts
        spec2 = CitySpec(rows=6, cols=6, spacing=100.0, points_per_edge=30.0,
                         offset_sigma=8.0, seed=53)
        graph2, pts2 = generate_city(spec2)
        with dp_core.zero_noise():
            generate_road(graph2, pts2, resolve_budget("Road", 1.0), F=0.5, seed=53)
        oracle_edge = match_points(pts2, graph2)  # verified against brute force above
        counts = np.bincount(oracle_edge.edge_index, minlength=len(graph2.edges))
        assert [e.noisy_count for e in graph2.edges] == list(counts)

        # Voronoi classification against nearest-centroid, off the bisector band
        sites = np.column_stack([rng.random(50) * 1000, rng.random(50) * 1000])
        cells = voronoi_cells(sites, bounds)
        qp = PointSet(rng.random((10_000, 2)) * 1000)
        d2 = np.sum((qp.xy[:, None] - sites[None, :]) ** 2, axis=-1)
        nearest = np.argmin(d2, axis=1)
        ds = np.sort(np.sqrt(d2), axis=1)
        clear = (ds[:, 1] - ds[:, 0]) > 1e-6
        member = np.stack([points_in_polygon(qp.xy, c) for c in cells])
        hits = member[nearest[clear], np.flatnonzero(clear)]
        assert hits.all()
        assert member[:, clear].sum(axis=0).max() == 1
        _passed(5, "grid/cluster/edge counts, map matching, and Voronoi "
                   "classification all match brute-force oracles on 10^4 points")


class TestCriterion06DistributionalSanity:
    def test_laplace_cdf(self):
        b = 2.0
        x = laplace_samples(b, 1_000_000, stream(61, "acc.c6"))
        for k in (-2, -1, 0, 1, 2):
            q = k * b
            analytic = 0.5 * math.exp(q / b) if q < 0 else 1.0 - 0.5 * math.exp(-q / b)
            assert abs(np.mean(x <= q) - analytic) <= 0.005
        _passed("6a", "Laplace empirical CDF within 0.005 at 5 quantiles, 10^6 draws")

    def test_exponential_radial_sampler(self):
        member = np.array([[0.0, 0.0]])
        region = Region(id=0, noisy_count=0, diameter=1.0,
                        rect=(-1e12, -1e12, 1e12, 1e12),
                        member_indices=np.array([0]), member_xy=member)
        h = 40.0
        state = KdeRegionState(h=h, eps_star=1.0, lam=10 ** 9,
                               counters=np.zeros(1, dtype=np.int64),
                               _uncapped=np.array([0]), _n_uncapped=1)
        rng = stream(62, "acc.c6")
        pts = np.array([kde_sample(region, state, [], rng) for _ in range(100_000)])
        r = np.linalg.norm(pts, axis=1)
        assert abs(r.mean() - h) <= 0.02 * h
        _passed("6b", f"radial sampler mean {r.mean():.2f} within 2% of h={h}")

    def test_triangle_and_polygon_uniformity(self):
        rng = stream(63, "acc.c6")
        tri = Triangle(np.zeros(2), np.array([1.0, 0.0]), np.array([0.0, 1.0]))
        samples = np.array([triangle_sample(tri, rng) for _ in range(100_000)])
        x, y = samples[:, 0], samples[:, 1]
        counts = [np.sum((x < 0.5) & (y < 0.5) & (x + y < 0.5)),
                  np.sum(x >= 0.5), np.sum((x < 0.5) & (y >= 0.5)),
                  np.sum((x < 0.5) & (y < 0.5) & (x + y >= 0.5))]
        p_tri = chisquare(counts).pvalue
        assert p_tri > 0.001

        poly = Polygon([(0, 0), (2, 0), (2, 1), (0, 1)])
        pts = polygon_sample(poly, rng, size=100_000)
        H, _, _ = np.histogram2d(pts[:, 0], pts[:, 1], bins=8, range=[[0, 2], [0, 1]])
        p_poly = chisquare(H.ravel()).pvalue
        assert p_poly > 0.001
        _passed("6c", f"chi-square p-values: triangle {p_tri:.3f}, polygon {p_poly:.3f}")


class TestCriterion07EpsilonMonotonicity:
    def test_nce_decreases_with_epsilon(self, city64k):
        graph, points, bounds, matches = city64k
        results = {}
        for method in KDE_METHODS:
            medians = {}
            for eps in (0.1, 1.0, 10.0):
                vals = []
                for s in range(10):
                    synth, _ = generate_with(method, eps, 7000 + s, graph,
                                             points, bounds, matches)
                    vals.append(nce(points, synth, bounds))
                medians[eps] = float(np.median(vals))
            assert medians[0.1] > medians[10.0], f"{method}: {medians}"
            results[method] = medians
        detail = "; ".join(f"{m}: {v[0.1]:.3f} > {v[10.0]:.3f}"
                           for m, v in results.items())
        _passed(7, f"median NCE strictly larger at eps=0.1 than eps=10 ({detail})")


class TestCriterion08RoadAlignment:
    def test_road_medd_beats_partitioning(self, aligned_city):
        graph, points, bounds, matches = aligned_city
        medians = {}
        for method in ALL_METHODS:
            vals = []
            for s in range(10):
                synth, _ = generate_with(method, 1.0, 8000 + s, graph, points,
                                         bounds, matches, k=60)
                vals.append(medd(points, synth, graph))
            medians[method] = float(np.median(vals))
        assert medians["Road"] < 1.0
        for method in ALL_METHODS:
            if method != "Road":
                assert medians["Road"] < medians[method], \
                    f"Road {medians['Road']:.3f} !< {method} {medians[method]:.3f}"
        _passed(8, f"Road MEDD {medians['Road']:.3f} m < 1 m and below all "
                   f"partitioning methods (next best "
                   f"{min(v for m, v in medians.items() if m != 'Road'):.2f} m)")


class TestCriterion09FacilityLocationRobustness:
    def test_flq_sdc_across_methods(self, flq_city64k):
        graph, points, bounds, matches = flq_city64k
        rng = stream(90, "acc.c9.candidates")
        idx = np.sort(rng.choice(len(graph.nodes_xy), size=100, replace=False))
        candidates = graph.nodes_xy[idx]
        # at eps=1 the Clust grid has 1600 cells, so the evaluated cluster
        # count (not the eps=0.1-constrained one) is available
        worst = (None, 1.0)
        for method in ALL_METHODS:
            vals = {"max-inf": [], "min-dist": []}
            for s in range(10):
                synth, _ = generate_with(method, 1.0, 9000 + s, graph,
                                         points, bounds, matches, k=400)
                for variant in vals:
                    vals[variant].append(flq_sdc(points, synth, candidates, 20, variant))
            for variant, v in vals.items():
                med = float(np.median(v))
                if med < worst[1]:
                    worst = (f"{method}/{variant}", med)
                assert med >= 0.8, f"{method} {variant}: median SDC {med}"
        _passed(9, f"all methods reach median FLQ SDC >= 0.8 at B=20 "
                   f"(worst: {worst[0]} at {worst[1]:.2f})")


class TestCriterion10MetricIdentities:
    def test_self_comparison(self, aligned_city):
        graph, points, bounds, _ = aligned_city
        clone = PointSet(points.xy.copy(), kind="synthetic")
        locations = eval_locations(graph, 10)
        assert nce(points, clone, bounds) == 0.0
        assert medd(points, clone, graph) == 0.0
        assert range_mae(points, clone, locations, 200.0) == 0.0
        assert hotspot_sdc(points, clone, bounds, 32) == 1.0
        assert flq_sdc(points, clone, locations, 20, "max-inf") == 1.0
        assert flq_sdc(points, clone, locations, 20, "min-dist") == 1.0
        _passed(10, "nce/medd/mae all 0 and SDCs all 1 on self-comparison")


class TestCriterion11Reproducibility:
    @pytest.mark.parametrize("method", ["UGrid-KDE", "Road"])
    def test_worker_count_invariance(self, tmp_path, method):
        spec = CitySpec(rows=8, cols=8, spacing=100.0, points_per_edge=15,
                        offset_sigma=4.0, seed=111)
        graph, points = generate_city(spec)
        projection = LocalProjection(-8.6, 41.15)
        pts_path = tmp_path / "points.csv"
        graph_path = tmp_path / "graph.json"
        save_points_csv(pts_path, projection.to_lonlat(points.xy))
        save_graph_json(graph_path, graph, projection)
        outputs = []
        for workers in (1, 8):
            out_dir = tmp_path / f"w{workers}_{method}"
            config = RunConfig(method=method, epsilon=1.0, seed=42,
                               workers=workers, points_path=str(pts_path),
                               graph_path=str(graph_path), out_dir=str(out_dir))
            run(config)
            outputs.append((out_dir / "synthetic.csv").read_bytes())
        assert outputs[0] == outputs[1]
        _passed(11, f"{method}: 1-worker and 8-worker synthetic CSVs byte-identical "
                    f"({len(outputs[0])} bytes)")
