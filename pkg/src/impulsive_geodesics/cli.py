"""Command line front end.

    impulsive-geodesics simulate --config flat-quadratic --eps 1e-3
    impulsive-geodesics sweep --config scenario.toml --eps-grid 1e-1:1e-4:4 --jobs 4
    impulsive-geodesics limit --config scenario.toml
    impulsive-geodesics validate-net --config scenario.toml --set net=bump-mass2

Exit status: 0 when every verdict passes, 1 on a failed verdict, 2 on a
configuration error and 3 when the engine fails (chart exit, step collapse).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import config as config_mod
from . import io, scenarios
from .asymptotics import SCHEMA, parallel_map, sweep
from .dynamics import integrate
from .errors import ConfigError, ImpulsiveGeodesicError
from .impulse import validate_strict
from .limit_oracle import limit_geodesic

log = logging.getLogger("impulsive_geodesics")

EXIT_OK, EXIT_VERDICT, EXIT_CONFIG, EXIT_ENGINE = 0, 1, 2, 3
LIMIT_SCHEMA = "impulsive-geodesics/limit-report/1"
VALIDATION_SCHEMA = "impulsive-geodesics/validation-report/1"
INDEX_SCHEMA = "impulsive-geodesics/trajectory-index/1"


def load_scenario(args):
    """Raw config from ``--config`` (file or shipped name) with all flag overrides applied."""
    if args.config is None:
        raise ConfigError("--config is required (a file path or one of "
                          f"{', '.join(sorted(scenarios.SCENARIOS))})")
    if args.config in scenarios.SCENARIOS and not Path(args.config).exists():
        raw = scenarios.get(args.config)
    else:
        raw = config_mod.load_raw(args.config)
    for assignment in args.set or ():
        config_mod.apply_override(raw, assignment)
    if args.eps is not None:
        raw["eps"] = args.eps
        raw["eps_grid"] = None
    if args.eps_grid is not None:
        raw["eps_grid"] = config_mod.parse_eps_grid(args.eps_grid)
    if args.out is not None:
        raw["output"] = args.out
    if args.jobs is not None:
        raw["jobs"] = args.jobs
    return config_mod.resolve(raw)


def _eps_list(sc):
    return sc.eps_grid if sc.raw["eps_grid"] is not None else [sc.eps]


def _simulate_one(job):
    sc, eps = job
    try:
        traj = integrate(sc.manifold, sc.profile, sc.net, eps, sc.data, sc.T, sc.integrator,
                         u_begin=-sc.T if sc.T > 1.0 else None)
    except ImpulsiveGeodesicError as exc:
        return f"{type(exc).__name__}: {exc}"
    return traj


def run_simulate(sc, fmt="csv"):
    layout = io.Layout(sc.raw["output"], sc.id)
    eps_list = _eps_list(sc)
    provenance = {"config_hash": sc.digest(), "scenario": sc.id}
    results = parallel_map(_simulate_one, [(sc, e) for e in eps_list], sc.raw["jobs"])
    entries, status = [], EXIT_OK
    for eps, res in zip(eps_list, results):
        if isinstance(res, str):
            log.error("eps=%g: %s", eps, res)
            entries.append({"eps": eps, "error": res})
            status = EXIT_ENGINE
            continue
        path = io.write_trajectory(layout.trajectories, res, fmt, provenance)
        entries.append({"eps": eps, "file": path.name, "steps": res.stats["accepted"]})
        print(f"eps={eps:.3e}  {path}")
    if len(eps_list) > 1:
        io.write_json(layout.trajectories / "index.json", {
            "schema": INDEX_SCHEMA,
            "scenario": sc.id,
            "format": fmt,
            "trajectories": entries,
            "provenance": provenance,
            "config": sc.raw,
        })
    return status


def run_sweep(sc):
    layout = io.Layout(sc.raw["output"], sc.id)
    sw = sc.raw["sweep"]
    report = sweep(sc.manifold, sc.profile, sc.net, sc.data, sc.T, _eps_list(sc), sc.integrator,
                   kink_rule=sc.raw["kink_rule"], v_points=sw["v_points"], phis=sc.test_functions,
                   tolerances=sw["tolerances"], jobs=sc.raw["jobs"], scenario=sc.id)
    report.config = sc.raw
    path = io.write_json(layout.reports / "sweep.json", report.to_dict())
    header, rows = io.sweep_error_rows(report)
    io.write_csv(layout.reports / "sweep_errors.csv", header, rows)
    eps = [r["eps"] for r in report.rows]
    for key in report.slopes:
        io.write_plotdata(layout.plotdata, key, eps, report.series(key))
    for name, ok in report.verdicts.items():
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    print(path)
    if report.failures:
        return EXIT_ENGINE
    return EXIT_OK if report.passed else EXIT_VERDICT


def run_limit(sc):
    layout = io.Layout(sc.raw["output"], sc.id)
    bg = limit_geodesic(sc.manifold, sc.profile, sc.data, u_min=min(-1.0, -sc.T), u_max=sc.T,
                        kink_rule=sc.raw["kink_rule"])
    path = io.write_json(layout.reports / "limit.json", {
        "schema": LIMIT_SCHEMA,
        "scenario": sc.id,
        "broken_geodesic": bg.to_dict(),
        "config": sc.raw,
    })
    print(f"jump={bg.jump + 0.0:.12g}  kink_slope={bg.kink_slope + 0.0:.12g}  refraction={bg.refraction.tolist()}")
    print(path)
    return EXIT_OK


def run_validate(sc):
    layout = io.Layout(sc.raw["output"], sc.id)
    v = sc.raw["validate"]
    eps_list = [config_mod._number(e, f"validate.eps_list[{i}]", True) for i, e in enumerate(v["eps_list"])]
    quad_tol = config_mod._number(v["quad_tol"], "validate.quad_tol", True)
    report = validate_strict(sc.net, eps_list, quad_tol=quad_tol)
    path = io.write_json(layout.reports / "validation.json", {
        "schema": VALIDATION_SCHEMA,
        "scenario": sc.id,
        "validation": report.to_dict(),
        "config": sc.raw,
    })
    io.write_plotdata(layout.plotdata, "l1_norm", report.eps, report.l1_norms)
    io.write_plotdata(layout.plotdata, "mass_error", report.eps, [abs(m - 1.0) for m in report.masses])
    for name, verdict in report.verdicts.items():
        print(f"{'PASS' if verdict.passed else 'FAIL'}  {name}: {verdict.detail}")
    print(path)
    return EXIT_OK if report.passed else EXIT_VERDICT


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="scenario file (TOML or JSON) or shipped scenario name")
    common.add_argument("--out", help="output directory (default from config, else ./out)")
    common.add_argument("--format", choices=("csv", "json"), default="csv",
                        help="trajectory file format (simulate)")
    common.add_argument("--eps", type=float, help="single regularisation parameter")
    common.add_argument("--eps-grid", metavar="START:STOP:COUNT",
                        help="geometric grid of eps values")
    common.add_argument("--jobs", type=int, help="worker processes for per-eps runs")
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a config key by dotted path, e.g. integrator.rel_tol=1e-9")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="impulsive-geodesics",
                                     description="Geodesics in impulsive N-fronted waves.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="integrate the regularised geodesics")
    sub.add_parser("sweep", parents=[common], help="convergence sweep against the limit")
    sub.add_parser("limit", parents=[common], help="closed-form broken geodesic")
    sub.add_parser("validate-net", parents=[common], help="check the strict delta net axioms")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        sc = load_scenario(args)
        if args.command == "simulate":
            return run_simulate(sc, args.format)
        if args.command == "sweep":
            return run_sweep(sc)
        if args.command == "limit":
            return run_limit(sc)
        return run_validate(sc)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ImpulsiveGeodesicError as exc:
        print(f"engine error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ENGINE
