"""Command-line surface: generate, evaluate, sweep, and fixture emission.

Exit codes: 0 success, 2 usage error, 3 input error, 4 internal invariant
violation.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .dp_core import Method
from .errors import DplocError, InputError, InvalidParameter, InvariantViolation
from .evaluation import evaluate
from .geometry import LocalProjection, PointSet
from .pipeline import (
    RunConfig, SWEEP_AXES, eval_locations, load_inputs, load_points_csv,
    parse_flat_config, run, save_graph_json, save_points_csv, sweep,
    write_sweep_csv,
)
from .testbed import CitySpec, generate_city

EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_INVARIANT = 4

_METHOD_NAMES = [m.value for m in Method]


def _add_run_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value config file; flags win")
    p.add_argument("--method", choices=_METHOD_NAMES)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--eps-split", help="explicit eps1,eps2,eps3 (must sum to epsilon)")
    p.add_argument("--seed", type=int)
    p.add_argument("--points", help="real points CSV (lon,lat)")
    p.add_argument("--graph", help="road graph JSON")
    p.add_argument("--oob", help="out-of-bounds polygons JSON")
    p.add_argument("--out", help="output directory")
    p.add_argument("--k", type=int, help="cluster count for Clust methods")
    p.add_argument("--lambda", dest="lam", type=int, help="KDE sampling cap")
    p.add_argument("--omega", type=float, help="WUD area weight")
    p.add_argument("--threshold-f", type=float, help="road threshold CDF value")
    p.add_argument("--d-max", type=float, help="off-edge histogram range (m)")
    p.add_argument("--workers", type=int)
    p.add_argument("--regions-out", help="write the region set as JSON (debugging)")


def _parse_eps_split(text: str):
    parts = text.split(",")
    if len(parts) != 3:
        raise InputError("--eps-split needs three comma-separated values")
    try:
        return tuple(float(x) for x in parts)
    except ValueError:
        raise InputError("--eps-split values must be numeric") from None


_FLAG_TO_FIELD = {
    "method": "method", "epsilon": "epsilon", "seed": "seed",
    "points": "points_path", "graph": "graph_path", "oob": "oob_path",
    "out": "out_dir", "k": "k", "lam": "lam", "omega": "omega",
    "threshold_f": "threshold_f", "d_max": "d_max", "workers": "workers",
    "regions_out": "regions_out",
}


def _build_config(args: argparse.Namespace) -> RunConfig:
    values: dict = {}
    if getattr(args, "config", None):
        raw = parse_flat_config(Path(args.config).read_text())
        for key, val in raw.items():
            field = _FLAG_TO_FIELD.get(key, key)
            values[field] = val
    for flag, fieldname in _FLAG_TO_FIELD.items():
        v = getattr(args, flag, None)
        if v is not None:
            values[fieldname] = v
    if getattr(args, "eps_split", None) is not None:
        values["eps_split"] = _parse_eps_split(args.eps_split)
    elif isinstance(values.get("eps_split"), (list, tuple)):
        values["eps_split"] = tuple(float(x) for x in values["eps_split"])
    if getattr(args, "evaluate", None):
        values["evaluate"] = True
    try:
        return RunConfig(**values)
    except TypeError as exc:
        raise InputError(f"bad configuration: {exc}") from None


def _cmd_generate(args) -> int:
    config = _build_config(args)
    if config.method not in _METHOD_NAMES:
        raise InputError(f"unknown method {config.method!r}")
    artifacts = run(config)
    print(f"wrote {artifacts.n_synthetic} synthetic points to {artifacts.synthetic_path}")
    if artifacts.metrics_path:
        print(f"metrics: {artifacts.metrics_path}")
    print(f"manifest: {artifacts.manifest_path}")
    return 0


def _cmd_evaluate(args) -> int:
    """Compare an existing synthetic CSV against the real data."""
    config = _build_config(args)
    inputs = load_inputs(config)
    synth_ll = load_points_csv(args.synthetic)
    synth = PointSet(inputs.projection.to_xy(synth_ll), kind="synthetic")
    locations = (eval_locations(inputs.graph, config.seed, config.n_eval_locations)
                 if inputs.graph else None)
    report = evaluate(inputs.points, synth, inputs.bounds, inputs.graph, locations,
                      radii=config.radii, granularities=config.granularities,
                      flq_b=config.flq_b)
    out = Path(args.metrics_out or (Path(config.out_dir) / "metrics.json"))
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(report.to_jsonable(), indent=2))
    print(f"metrics: {out}")
    return 0


def _cmd_sweep(args) -> int:
    config = _build_config(args)
    try:
        values = [float(v) for v in args.values.split(",")]
    except ValueError:
        raise InputError("--values must be comma-separated numbers") from None
    rows = sweep(config, args.axis, values, seeds=args.seeds)
    out = Path(args.sweep_out or (Path(config.out_dir) / f"sweep_{args.axis}.csv"))
    out.parent.mkdir(parents=True, exist_ok=True)
    write_sweep_csv(out, rows)
    print(f"wrote {len(rows)} rows to {out}")
    return 0


def _cmd_fixture(args) -> int:
    spec = CitySpec(rows=args.rows, cols=args.cols, spacing=args.spacing,
                    points_per_edge=args.points_per_edge,
                    offset_sigma=args.offset_sigma,
                    along_edge_profile=args.profile, seed=args.seed)
    graph, points = generate_city(spec)
    projection = LocalProjection(args.origin_lon, args.origin_lat)
    Path(args.out_points).parent.mkdir(parents=True, exist_ok=True)
    save_points_csv(args.out_points, projection.to_lonlat(points.xy))
    Path(args.out_graph).parent.mkdir(parents=True, exist_ok=True)
    save_graph_json(args.out_graph, graph, projection)
    print(f"fixture: {len(points)} points on {len(graph.edges)} edges")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dploc",
        description="Differentially private synthetic location data")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate a synthetic dataset")
    _add_run_options(g)
    g.add_argument("--evaluate", action="store_true",
                   help="also compute the metric report")
    g.set_defaults(fn=_cmd_generate)

    e = sub.add_parser("evaluate", help="evaluate an existing synthetic CSV")
    _add_run_options(e)
    e.add_argument("--synthetic", required=True, help="synthetic points CSV")
    e.add_argument("--metrics-out", help="metric report path (JSON)")
    e.set_defaults(fn=_cmd_evaluate)

    s = sub.add_parser("sweep", help="sweep a parameter, emitting plot-ready CSV")
    _add_run_options(s)
    s.add_argument("--axis", choices=SWEEP_AXES, required=True)
    s.add_argument("--values", required=True, help="comma-separated axis values")
    s.add_argument("--seeds", type=int, default=10)
    s.add_argument("--sweep-out", help="output CSV path")
    s.set_defaults(fn=_cmd_sweep)

    f = sub.add_parser("fixture", help="emit a synthetic-city fixture")
    f.add_argument("--rows", type=int, default=20)
    f.add_argument("--cols", type=int, default=20)
    f.add_argument("--spacing", type=float, default=100.0)
    f.add_argument("--points-per-edge", type=float, default=20.0)
    f.add_argument("--offset-sigma", type=float, default=0.0)
    f.add_argument("--profile", choices=["uniform", "clustered"], default="uniform")
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--origin-lon", type=float, default=0.0)
    f.add_argument("--origin-lat", type=float, default=0.0)
    f.add_argument("--out-points", required=True)
    f.add_argument("--out-graph", required=True)
    f.set_defaults(fn=_cmd_fixture)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except InvariantViolation as exc:
        print(f"internal invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (InputError, InvalidParameter, FileNotFoundError, DplocError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
