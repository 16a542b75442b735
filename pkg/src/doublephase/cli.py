"""Command-line front end.

    doublephase validate    CONFIG
    doublephase solve       CONFIG
    doublephase multi-solve CONFIG --n-max N
    doublephase verify      CONFIG
    doublephase norms       CONFIG FIELD_CSV

Outputs go to ``output.dir`` of the config (or ``--out``). Exit status is 0 on
success, 1 on a mathematical failure and 2 on usage, parse or I/O errors.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .assembly import AssemblyError
from .config import ConfigError, load_config
from .fields import validate_h1
from .mesh import read_nodal_csv, write_nodal_csv
from .musielak import (
    boundary_modular, boundary_norm, check_norm_modular_relations, gradient_modular,
    gradient_norm, luxemburg_norm, modular,
)
from .region import RegionError
from .solver import LambdaScheduleExhausted, SolverError, select_lambda, write_residual_history
from .trapping import BracketError, LadderError, multi_solve, verify_pair

EXIT_OK, EXIT_MATH, EXIT_USAGE = 0, 1, 2
MATH_ERRORS = (SolverError, RegionError, BracketError, LadderError, AssemblyError)

log = logging.getLogger("doublephase")


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_report(path: Path, report: dict):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_clean(report), indent=2, sort_keys=True, allow_nan=False) + "\n")


def _outdir(args, cfg):
    d = Path(args.out) if args.out else cfg.output_dir
    d.mkdir(parents=True, exist_ok=True)
    return d


# --- commands -------------------------------------------------------------------

def cmd_validate(args, cfg):
    mesh = cfg.build_mesh()
    spec = cfg.problem(mesh)
    comps = [validate_h1(d, mesh) for d in spec.data]
    report = {"command": "validate", "ok": all(r.ok for r in comps), "dim": mesh.dim,
              "n_vertices": mesh.n_vertices, "n_cells": mesh.n_cells,
              "boundary_kind": cfg.boundary_kind,
              "components": [dict(r.as_dict(), bounds=d.bounds(mesh))
                             for r, d in zip(comps, spec.data)],
              "expressions": {"f": list(spec.f_sources), "g": list(spec.g_sources)}}
    for k, r in enumerate(comps):
        for v in r.violations:
            print(f"component {k + 1}: {v}")
    print("validate:", "PASS" if report["ok"] else "FAIL")
    return report, EXIT_OK if report["ok"] else EXIT_MATH


def _solve_fields(state):
    return {"u1": state.u1, "u2": state.u2}


def cmd_solve(args, cfg):
    out = _outdir(args, cfg)
    spec = cfg.problem()
    mesh = spec.mesh
    report = {"command": "solve", "region_kind": cfg.region["kind"], "converged": False}
    region = cfg.build_region(spec)
    if region.dirichlet and cfg.region["kind"] == "dirichlet_bracket":
        write_nodal_csv(out / "bracket.csv", mesh,
                        {"lower1": region.lower.u1, "lower2": region.lower.u2,
                         "upper1": region.upper.u1, "upper2": region.upper.u2})
    try:
        choice = select_lambda(spec, region, cfg.solver)
        state, rep, attempts, status = choice.state, choice.report, choice.attempts, EXIT_OK
    except LambdaScheduleExhausted as exc:
        state, rep, attempts, status = exc.state, exc.report, exc.attempts, EXIT_MATH
        report["error"] = str(exc)
    report["lambda_attempts"] = attempts
    if rep is not None:
        d = rep.as_dict()
        d.pop("residual_history")
        report.update(d)
        write_residual_history(out / "residual_history.csv", rep)
    # an exhausted schedule may end on a converged but non-enclosed solve
    report["converged"] = status == EXIT_OK
    if state is not None:
        write_nodal_csv(out / "solution.csv", mesh, _solve_fields(state))
    print(f"solve: {'converged' if status == EXIT_OK else 'FAILED'}"
          + (f", lambda={rep.lambda_used[0]:g}, residual={rep.final_residual_norm:.3e}, "
             f"enclosure_violation={rep.enclosure_violation:.3e}" if rep else ""))
    return report, status


def cmd_multi_solve(args, cfg):
    out = _outdir(args, cfg)
    spec = cfg.problem()
    ladder = cfg.ladder(args.n_max)
    res = multi_solve(spec, ladder, cfg.solver, cfg.sampling)
    bands = []
    for n, (state, rep) in enumerate(res):
        name = f"band_{n:03d}.csv"
        write_nodal_csv(out / name, spec.mesh, _solve_fields(state))
        d = rep.as_dict()
        d.pop("residual_history")
        bands.append({"band": n, "bounds": ladder.bands[n], "csv": name, "solve": d})
    report = {"command": "multi-solve", "n_max": args.n_max, "directions": ladder.directions,
              "complete": res.complete, "failed_band": res.failed_band, "error": res.error,
              "ordering_ok": res.ordering_ok, "distinct_ok": res.distinct_ok, "gaps": res.gaps,
              "verifications": [v.as_dict() for v in res.verifications], "bands": bands}
    ok = res.complete and res.ordering_ok and res.distinct_ok
    print(f"multi-solve: {len(res)}/{len(ladder)} bands solved; ordering "
          f"{'PASS' if res.ordering_ok else 'FAIL'}; distinct {'PASS' if res.distinct_ok else 'FAIL'}"
          + (f"; band {res.failed_band}: {res.error}" if not res.complete else ""))
    return report, EXIT_OK if ok else EXIT_MATH


def cmd_verify(args, cfg):
    _outdir(args, cfg)
    spec = cfg.problem()
    region = cfg.build_region(spec)
    rep = verify_pair(region, spec, cfg.sampling, eps_reg=cfg.solver.epsilon_reg)
    for v in rep.violations:
        print(f"{v['inequality']} inequality, component {v['component']}, node {v['node']} "
              f"(w={v['w']}): {v['value']:.3e}")
    print(f"verify: {'PASS' if rep.passed else 'FAIL'} (sub max {rep.sub_max:.3e}, "
          f"super min {rep.super_min:.3e}; {rep.note})")
    return dict(rep.as_dict(), command="verify", region_kind=cfg.region["kind"]), \
        EXIT_OK if rep.passed else EXIT_MATH


def cmd_norms(args, cfg):
    _outdir(args, cfg)
    mesh = cfg.build_mesh()
    datas = cfg.exponent_data()
    table = read_nodal_csv(args.field, mesh)
    skip = {"index", "x1", "x2"}
    rows = []
    for name, u in table.items():
        if name in skip:
            continue
        k = 1 if name.endswith("2") else 0
        d = datas[k]
        row = {"column": name, "component": k + 1,
               "modular": modular(u, d, mesh), "norm": luxemburg_norm(u, d, mesh).value,
               "gradient_modular": gradient_modular(u, d, mesh),
               "gradient_norm": gradient_norm(u, d, mesh).value,
               "boundary_modular": boundary_modular(u, d, mesh),
               "boundary_norm": boundary_norm(u, d, mesh).value}
        try:
            row["relations"] = check_norm_modular_relations(u, d, mesh).as_dict()
        except ValueError:
            row["relations"] = None
        rows.append(row)
    hdr = f"{'column':>8} {'rho(u)':>14} {'||u||':>14} {'rho(|grad u|)':>14} " \
          f"{'||grad u||':>14} {'||u||_bdry':>14} relations"
    print(hdr)
    for r in rows:
        rel = "n/a" if r["relations"] is None else ("PASS" if r["relations"]["ok"] else "FAIL")
        print(f"{r['column']:>8} {r['modular']:14.8g} {r['norm']:14.8g} "
              f"{r['gradient_modular']:14.8g} {r['gradient_norm']:14.8g} "
              f"{r['boundary_norm']:14.8g} {rel}")
    ok = all(r["relations"] is None or r["relations"]["ok"] for r in rows)
    return {"command": "norms", "field": args.field, "rows": rows, "ok": ok}, \
        EXIT_OK if ok else EXIT_MATH


COMMANDS = {"validate": cmd_validate, "solve": cmd_solve, "multi-solve": cmd_multi_solve,
            "verify": cmd_verify, "norms": cmd_norms}
REPORT_NAMES = {"validate": "validate_report.json", "solve": "solve_report.json",
                "multi-solve": "ladder_report.json", "verify": "verify_report.json",
                "norms": "norms_report.json"}


def build_parser():
    parser = argparse.ArgumentParser(prog="doublephase",
                                     description="Double phase system solver with trapping regions")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (("validate", "check exponent conditions and expressions"),
                        ("solve", "solve inside the configured trapping region"),
                        ("multi-solve", "solve once per band of a ladder"),
                        ("verify", "check the sub/supersolution inequalities"),
                        ("norms", "modulars and norms of nodal fields")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("config", help="YAML run config")
        if name == "norms":
            p.add_argument("field", help="nodal CSV (index, coordinates, value columns)")
        if name == "multi-solve":
            p.add_argument("--n-max", type=int, required=True, help="last band index")
        p.add_argument("--out", help="output directory (default: output.dir of the config)")
        p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "n_max", 0) is not None and getattr(args, "n_max", 0) < 0:
        print("error: --n-max must be nonnegative", file=sys.stderr)
        return EXIT_USAGE
    report_name = REPORT_NAMES[args.command]
    try:
        cfg = load_config(args.config)
    except (OSError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        if args.out:
            write_report(Path(args.out) / report_name,
                         {"command": args.command, "error": str(exc), "exit_code": EXIT_USAGE})
        return EXIT_USAGE
    out = Path(args.out) if args.out else cfg.output_dir
    t0 = time.perf_counter()
    try:
        report, status = COMMANDS[args.command](args, cfg)
    except MATH_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        report, status = {"command": args.command, "error": str(exc)}, EXIT_MATH
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        report, status = {"command": args.command, "error": str(exc)}, EXIT_USAGE
    report.update(config=str(args.config), seed=cfg.seed, exit_code=status,
                  elapsed_seconds=time.perf_counter() - t0)
    write_report(out / report_name, report)
    return status


if __name__ == "__main__":
    sys.exit(main())
