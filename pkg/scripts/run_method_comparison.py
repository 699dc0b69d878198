#!/usr/bin/env python3
"""Desk-scale method comparison: NCE, MEDD, and runtime for every generation
method on a synthetic city fixture, one table row per method.

Usage:
    python scripts/run_method_comparison.py [--epsilon 1.0] [--seeds 5]
"""

import argparse
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from dploc.dp_core import Method, resolve_budget
from dploc.evaluation import medd, nce
from dploc.geometry import PointSet
from dploc.partition import build_agrid, build_cluster, build_ugrid
from dploc.region_gen import generate_regions
from dploc.roadnet import generate_road, match_points
from dploc.testbed import CitySpec, dataset_bounds, generate_blobs, generate_city

METHODS = [m.value for m in Method]


def build_fixture(seed=1234):
    spec = CitySpec(rows=25, cols=25, spacing=100.0, points_per_edge=14.0,
                    offset_sigma=3.0, seed=seed)
    graph, city_pts = generate_city(spec)
    blobs = generate_blobs(5, 1600, 180.0, dataset_bounds(city_pts, graph), seed=seed)
    points = PointSet(np.concatenate([city_pts.xy, blobs.xy]))
    return graph, points, dataset_bounds(points, graph)


def run_method(method, eps, seed, graph, points, bounds, matches, k=100):
    budget = resolve_budget(method, eps)
    m = Method.parse(method)
    if m is Method.ROAD:
        synth, _ = generate_road(graph, points, budget, seed=seed, matches=matches)
        return synth
    if m.partition == "ugrid":
        rs = build_ugrid(points, bounds, budget.eps1, seed)
    elif m.partition == "agrid":
        rs = build_agrid(points, bounds, budget.eps1, budget.eps2, seed)
    else:
        rs = build_cluster(points, bounds, k, budget.eps1, budget.eps2, seed)
    synth, _ = generate_regions(rs, m.generator, budget, None, seed)
    return synth


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--epsilon", type=float, default=1.0)
    ap.add_argument("--seeds", type=int, default=5)
    args = ap.parse_args()

    graph, points, bounds = build_fixture()
    matches = match_points(points, graph)
    print(f"fixture: {len(points)} points, {len(graph.edges)} edges, "
          f"epsilon={args.epsilon}, {args.seeds} seeds\n")
    print(f"{'method':12s} {'NCE':>8s} {'MEDD (m)':>10s} {'time (s)':>9s}")
    for method in METHODS:
        nces, medds, times = [], [], []
        for s in range(args.seeds):
            t0 = time.perf_counter()
            synth = run_method(method, args.epsilon, s, graph, points, bounds, matches)
            times.append(time.perf_counter() - t0)
            nces.append(nce(points, synth, bounds))
            medds.append(medd(points, synth, graph))
        print(f"{method:12s} {np.median(nces):8.3f} {np.median(medds):10.2f} "
              f"{np.median(times):9.2f}")


if __name__ == "__main__":
    main()
