import numpy as np
import pytest

from dploc.geometry import PointSet
from dploc.roadnet import match_points
from dploc.testbed import CitySpec, dataset_bounds, generate_blobs, generate_city


@pytest.fixture(scope="session")
def city64k():
    """40x40 fixture city, ~64k points with clustered density.

    City points alone are spatially uniform, which real city data never is
    (and which makes partition quality invisible to NCE); Gaussian blobs on
    top supply the density structure the trend criteria exercise.
    """
    spec = CitySpec(rows=40, cols=40, spacing=100.0, points_per_edge=14.0, seed=1234)
    graph, city_pts = generate_city(spec)
    blobs = generate_blobs(8, 2500, 250.0, dataset_bounds(city_pts, graph), seed=1234)
    points = PointSet(np.concatenate([city_pts.xy, blobs.xy]))
    bounds = dataset_bounds(points, graph)
    matches = match_points(points, graph)
    return graph, points, bounds, matches


@pytest.fixture(scope="session")
def flq_city64k():
    """40x40 city, ~64k points, with twenty tight mass centers.

    Facility selection at B = 20 is only statistically determined when the
    data has about that many sharp concentrations (two disjoint halves of
    this fixture's real data agree on the min-dist facility set at SDC 0.95;
    on a flatter fixture even real-vs-real agreement drops to ~0.65, which
    no generator could beat).
    """
    spec = CitySpec(rows=40, cols=40, spacing=100.0, points_per_edge=6.0, seed=1234)
    graph, city_pts = generate_city(spec)
    blobs = generate_blobs(20, 2200, 120.0, dataset_bounds(city_pts, graph), seed=1234)
    points = PointSet(np.concatenate([city_pts.xy, blobs.xy]))
    bounds = dataset_bounds(points, graph)
    matches = match_points(points, graph)
    return graph, points, bounds, matches


@pytest.fixture(scope="session")
def aligned_city():
    """15x15 city with every point exactly on an edge (offset_sigma = 0)."""
    spec = CitySpec(rows=15, cols=15, spacing=100.0, points_per_edge=20.0,
                    offset_sigma=0.0, seed=77)
    graph, points = generate_city(spec)
    bounds = dataset_bounds(points, graph)
    matches = match_points(points, graph)
    return graph, points, bounds, matches
