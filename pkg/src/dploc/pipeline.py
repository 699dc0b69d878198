"""Run configuration, file formats, and orchestration of
partition -> generate -> evaluate.

All randomness flows from a single master seed through named stage streams,
so a run is reproducible byte-for-byte from its manifest, independent of
worker count.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .dp_core import Budget, Method, resolve_budget
from .errors import InputError, InvalidParameter
from .evaluation import MetricReport, evaluate, hotspot_sdc, nce, range_mae
from .geometry import BoundingBox, LocalProjection, Polygon, PointSet, points_in_polygon
from .partition import build_agrid, build_cluster, build_ugrid
from .region_gen import generate_regions
from .roadnet import RoadGraph, Edge, generate_road
from .rng import derive_seed, stream
from .testbed import dataset_bounds

CSV_HEADER = "lon,lat"
_COORD_FMT = "{:.10f},{:.10f}"


@dataclass
class RunConfig:
    """One generation run. Defaults follow the evaluated configurations:
    epsilon 1, K = 1000 clusters, lambda = 2, omega = 0.5, F = 0.9."""

    method: str = "Road"
    epsilon: float = 1.0
    eps_split: tuple[float, float, float] | None = None
    k: int = 1000
    lam: int = 2
    omega: float = 0.5
    threshold_f: float = 0.9
    d_max: float = 50.0
    seed: int = 0
    workers: int = 1
    points_path: str | None = None
    graph_path: str | None = None
    oob_path: str | None = None
    out_dir: str = "out"
    evaluate: bool = False
    radii: tuple[float, ...] = (100.0, 200.0, 500.0)
    granularities: tuple[int, ...] = (64, 128, 256)
    flq_b: int = 20
    n_eval_locations: int = 100
    regions_out: str | None = None

    def resolved_budget(self) -> Budget:
        if self.eps_split is not None:
            e1, e2, e3 = self.eps_split
            return Budget(self.epsilon, e1, e2, e3)
        return resolve_budget(self.method, self.epsilon)


@dataclass
class RunArtifacts:
    synthetic_path: Path
    manifest_path: Path
    metrics_path: Path | None
    n_synthetic: int
    report: MetricReport | None = None


# ---------------------------------------------------------------------------
# file formats (lon/lat on disk, meters in memory)

def load_points_csv(path) -> np.ndarray:
    """Read a lon,lat CSV into an (N, 2) array of degrees."""
    text = Path(path).read_text()
    lines = text.splitlines()
    if not lines:
        raise InputError(f"{path}: empty file")
    if lines[0].strip().lower().replace(" ", "") != CSV_HEADER:
        raise InputError(f"{path}:1: expected header '{CSV_HEADER}'")
    rows = []
    for i, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise InputError(f"{path}:{i}: expected two comma-separated fields")
        try:
            rows.append((float(parts[0]), float(parts[1])))
        except ValueError:
            raise InputError(f"{path}:{i}: non-numeric field") from None
    if not rows:
        raise InputError(f"{path}: no data rows")
    return np.array(rows)


def save_points_csv(path, lonlat: np.ndarray) -> None:
    with open(path, "w") as f:
        f.write(CSV_HEADER + "\n")
        for lon, lat in lonlat:
            f.write(_COORD_FMT.format(lon, lat) + "\n")


def load_graph_json(path) -> dict:
    """Raw lon/lat graph: {nodes: [{id, lon, lat}], edges: [{id, node_ids,
    polyline?}]}. A missing polyline means a straight segment."""
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(data, dict) or "nodes" not in data or "edges" not in data:
        raise InputError(f"{path}: graph JSON needs 'nodes' and 'edges'")
    return data


def graph_from_raw(raw: dict, projection: LocalProjection) -> RoadGraph:
    node_ids = [n["id"] for n in raw["nodes"]]
    lonlat = np.array([[n["lon"], n["lat"]] for n in raw["nodes"]], dtype=float)
    nodes_xy = projection.to_xy(lonlat) if len(lonlat) else np.empty((0, 2))
    by_id = {nid: xy for nid, xy in zip(node_ids, nodes_xy)}
    edges = []
    for e in raw["edges"]:
        if "polyline" in e and e["polyline"]:
            poly = projection.to_xy(np.asarray(e["polyline"], dtype=float))
        else:
            try:
                poly = np.array([by_id[e["node_ids"][0]], by_id[e["node_ids"][1]]])
            except KeyError as exc:
                raise InputError(f"edge {e.get('id')}: unknown node id {exc}") from None
        edges.append(Edge(id=int(e["id"]), polyline=poly))
    return RoadGraph(node_ids, nodes_xy, edges)


def save_graph_json(path, graph: RoadGraph, projection: LocalProjection) -> None:
    nodes_ll = projection.to_lonlat(graph.nodes_xy)
    payload = {
        "nodes": [{"id": nid, "lon": float(lon), "lat": float(lat)}
                  for nid, (lon, lat) in zip(graph.node_ids, nodes_ll)],
        "edges": [{"id": e.id,
                   "node_ids": [],
                   "polyline": [[float(lon), float(lat)]
                                for lon, lat in projection.to_lonlat(e.polyline)]}
                  for e in graph.edges],
    }
    Path(path).write_text(json.dumps(payload))


def load_oob_json(path) -> list[np.ndarray]:
    """Out-of-bounds polygons: a JSON array of lon/lat rings."""
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(data, list):
        raise InputError(f"{path}: expected an array of rings")
    return [np.asarray(ring, dtype=float) for ring in data]


def oob_from_raw(rings: list[np.ndarray], projection: LocalProjection) -> list[Polygon]:
    polys = []
    for ring in rings:
        xy = projection.to_xy(ring)
        # normalize winding to counterclockwise
        x, y = xy[:, 0], xy[:, 1]
        if 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y) < 0:
            xy = xy[::-1]
        polys.append(Polygon(xy))
    return polys


def parse_flat_config(text: str) -> dict:
    """Flat `key = value` file (a TOML-compatible subset): strings quoted or
    bare, ints, floats, true/false, and comma-separated numeric lists."""
    out = {}
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"config line {i}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = _parse_config_value(value)
    return out


def _parse_config_value(value: str):
    if value.startswith('"') and value.endswith('"') and len(value) >= 2:
        return value[1:-1]
    low = value.lower()
    if low in ("true", "false"):
        return low == "true"
    if "," in value:
        return tuple(_parse_config_value(v.strip()) for v in value.split(","))
    try:
        return int(value)
    except ValueError:
        pass
    try:
        return float(value)
    except ValueError:
        return value


# ---------------------------------------------------------------------------
# orchestration

@dataclass
class LoadedInputs:
    projection: LocalProjection
    points: PointSet
    graph: RoadGraph | None
    oob: list[Polygon]
    bounds: BoundingBox
    n_input_rows: int
    n_oob_dropped: int


def load_inputs(config: RunConfig) -> LoadedInputs:
    """Read and project all inputs, dropping real points inside
    out-of-bounds regions (their count is reported in the manifest)."""
    if not config.points_path:
        raise InputError("a points CSV is required")
    lonlat = load_points_csv(config.points_path)
    raw_graph = load_graph_json(config.graph_path) if config.graph_path else None
    raw_oob = load_oob_json(config.oob_path) if config.oob_path else []

    # anchor the projection at the combined lon/lat bounding-box center
    stack = [lonlat]
    if raw_graph is not None and raw_graph["nodes"]:
        stack.append(np.array([[n["lon"], n["lat"]] for n in raw_graph["nodes"]]))
    for ring in raw_oob:
        stack.append(ring)
    combined = np.concatenate(stack)
    anchor = combined.min(axis=0) + 0.5 * (combined.max(axis=0) - combined.min(axis=0))
    projection = LocalProjection(float(anchor[0]), float(anchor[1]))

    oob = oob_from_raw(raw_oob, projection)
    xy = projection.to_xy(lonlat)
    keep = np.ones(len(xy), dtype=bool)
    for poly in oob:
        keep &= ~points_in_polygon(xy, poly)
    points = PointSet(xy[keep])
    graph = graph_from_raw(raw_graph, projection) if raw_graph is not None else None
    bounds = dataset_bounds(points, graph)
    return LoadedInputs(projection, points, graph, oob, bounds,
                        n_input_rows=len(xy), n_oob_dropped=int((~keep).sum()))


def generate_synthetic(inputs: LoadedInputs, config: RunConfig, seed: int,
                       budget: Budget | None = None, matches=None):
    """Partition and generate (or run the road pipeline). Returns the
    synthetic PointSet, a report object, and the RegionSet when one exists."""
    method = Method.parse(config.method)
    budget = budget or config.resolved_budget()
    if method is Method.ROAD:
        if inputs.graph is None:
            raise InputError("the Road method requires a road graph")
        synth, report = generate_road(
            inputs.graph, inputs.points, budget, F=config.threshold_f,
            d_max=config.d_max, oob=inputs.oob, seed=seed,
            workers=config.workers, matches=matches)
        return synth, report, None

    if method.partition == "ugrid":
        region_set = build_ugrid(inputs.points, inputs.bounds, budget.eps1, seed)
    elif method.partition == "agrid":
        region_set = build_agrid(inputs.points, inputs.bounds, budget.eps1,
                                 budget.eps2, seed)
    else:
        region_set = build_cluster(inputs.points, inputs.bounds, config.k,
                                   budget.eps1, budget.eps2, seed)
    synth, report = generate_regions(
        region_set, method.generator, budget, inputs.oob, seed,
        lam=config.lam, omega=config.omega, workers=config.workers)
    return synth, report, region_set


def eval_locations(graph: RoadGraph, seed: int, n: int = 100) -> np.ndarray:
    """Seeded sample of n graph nodes used as query/candidate locations."""
    rng = stream(seed, "eval.locations")
    count = len(graph.nodes_xy)
    idx = rng.choice(count, size=min(n, count), replace=False)
    return graph.nodes_xy[np.sort(idx)]


def run(config: RunConfig) -> RunArtifacts:
    """Execute a full run and write the synthetic CSV, manifest, and
    (optionally) the metric report into config.out_dir."""
    t0 = time.perf_counter()
    budget = config.resolved_budget()
    inputs = load_inputs(config)
    synth, report, region_set = generate_synthetic(inputs, config, config.seed, budget)

    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    synth_path = out_dir / "synthetic.csv"
    save_points_csv(synth_path, inputs.projection.to_lonlat(synth.xy))

    metrics_path = None
    metric_report = None
    if config.evaluate:
        locations = eval_locations(inputs.graph, config.seed,
                                   config.n_eval_locations) if inputs.graph else None
        metric_report = evaluate(
            inputs.points, synth, inputs.bounds, inputs.graph, locations,
            radii=config.radii, granularities=config.granularities,
            flq_b=config.flq_b)
        metric_report.runtime_seconds = time.perf_counter() - t0
        metrics_path = out_dir / "metrics.json"
        metrics_path.write_text(json.dumps(metric_report.to_jsonable(), indent=2))

    if config.regions_out and region_set is not None:
        Path(config.regions_out).write_text(
            json.dumps(region_set.to_jsonable(inputs.projection)))

    manifest = {
        "version": __version__,
        "config": _jsonable_config(config),
        "budget": [budget.eps1, budget.eps2, budget.eps3],
        "projection_anchor": [inputs.projection.lon0, inputs.projection.lat0],
        "counts": {
            "input_rows": inputs.n_input_rows,
            "oob_dropped": inputs.n_oob_dropped,
            "synthetic_points": len(synth),
            "skipped": report.skipped,
        },
        "warnings": report.warnings,
        "wall_time_seconds": time.perf_counter() - t0,
        "outputs": {"synthetic": str(synth_path),
                    "metrics": str(metrics_path) if metrics_path else None},
    }
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2))
    return RunArtifacts(synth_path, manifest_path, metrics_path,
                        n_synthetic=len(synth), report=metric_report)


def _jsonable_config(config: RunConfig) -> dict:
    d = asdict(config)
    d["eps_split"] = list(config.eps_split) if config.eps_split else None
    d["radii"] = list(config.radii)
    d["granularities"] = list(config.granularities)
    return d


SWEEP_AXES = ("epsilon", "radius", "granularity")


def sweep(config: RunConfig, axis: str, values, seeds: int = 10) -> list[dict]:
    """One metric row per (value, seed): NCE for the epsilon axis, range MAE
    for radius, hotspot SDC for granularity. Seeds are derived per cell."""
    if axis not in SWEEP_AXES:
        raise InvalidParameter(f"axis must be one of {SWEEP_AXES}")
    inputs = load_inputs(config)
    locations = eval_locations(inputs.graph, config.seed,
                               config.n_eval_locations) if inputs.graph else None
    rows = []
    if axis == "epsilon":
        for vi, eps in enumerate(values):
            overrides = {"epsilon": float(eps)}
            if config.eps_split is not None:
                # scale an explicit split proportionally across the sweep
                ratio = float(eps) / config.epsilon
                overrides["eps_split"] = tuple(e * ratio for e in config.eps_split)
            cfg = RunConfig(**{**asdict(config), **overrides})
            budget = cfg.resolved_budget()
            for s in range(seeds):
                cell_seed = derive_seed(config.seed, "sweep", axis, vi, s)
                synth, _, _ = generate_synthetic(inputs, cfg, cell_seed, budget)
                rows.append({"value": float(eps),
                             "metric": nce(inputs.points, synth, inputs.bounds),
                             "seed": s})
        return rows

    # radius and granularity sweeps reuse one generation per seed
    budget = config.resolved_budget()
    for s in range(seeds):
        cell_seed = derive_seed(config.seed, "sweep", axis, s)
        synth, _, _ = generate_synthetic(inputs, config, cell_seed, budget)
        for v in values:
            if axis == "radius":
                if locations is None:
                    raise InputError("radius sweep requires a road graph for locations")
                metric = range_mae(inputs.points, synth, locations, float(v))
            else:
                metric = hotspot_sdc(inputs.points, synth, inputs.bounds, int(v))
            rows.append({"value": float(v), "metric": metric, "seed": s})
    return rows


def write_sweep_csv(path, rows: list[dict]) -> None:
    with open(path, "w") as f:
        f.write("value,metric,seed\n")
        for r in rows:
            f.write(f"{r['value']},{r['metric']},{r['seed']}\n")
