"""Command-line entry point ``sdg``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace

from .harness import ConfigError, load_config, run_convergence
from .mesh import DARCY, STOKES, MeshError, build_staggered, check_regularity, generate_primal, write_poly2d
from .verify import SUITES, run_suite


def _cmd_run(args):
    config = load_config(args.config)
    if args.output:
        config = replace(config, output=args.output)
    if args.timing:
        config = replace(config, timing=True)
    report = run_convergence(config, parallel=args.parallel_levels)
    sys.stdout.write(report.csv_text())
    if report.rates:
        sys.stdout.write(report.rate_text())
    for col, (slope, lo, hi, ok) in report.window_results().items():
        print(f"{'PASS' if ok else 'FAIL'} {col} slope={slope:.3f} window=[{lo}, {hi}]")
    for msg in report.failures:
        print(f"FAIL {msg}", file=sys.stderr)
    return 0 if report.passed else 1


def _cmd_verify(args):
    suites = list(SUITES) if args.suite == "all" else [args.suite]
    ok = True
    for name in suites:
        rep = run_suite(name)
        print(json.dumps(rep, indent=2, sort_keys=True))
        ok &= rep["passed"]
    return 0 if ok else 1


def _cmd_mesh(args):
    domain = ((args.x0, args.x1), (args.y0, args.y1))
    sub = STOKES if args.subdomain == "stokes" else DARCY
    primal = generate_primal(args.kind, args.nx, args.ny or args.nx, domain=domain,
                             distortion=args.distortion, seed=args.seed, subdomain=sub,
                             interface_side=args.interface_side)
    write_poly2d(primal, args.out)
    reg = check_regularity(build_staggered(primal), args.rho)
    print(f"wrote {args.out}: {primal.n_cells} cells; min edge ratio {reg.min_edge_ratio:.4f}, "
          f"min ball ratio {reg.min_ball_ratio:.4f}")
    return 0 if reg.passed else 1


def build_parser():
    p = argparse.ArgumentParser(prog="sdg", description="Staggered DG solver for coupled "
                                "Stokes / Darcy-Forchheimer flow")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a convergence study from an INI config")
    r.add_argument("--config", required=True)
    r.add_argument("--output", help="override the output directory")
    r.add_argument("--parallel-levels", action="store_true")
    r.add_argument("--timing", action="store_true", help="record wall time in the CSV")
    r.set_defaults(func=_cmd_run)

    v = sub.add_parser("verify", help="run a numerical verification suite")
    v.add_argument("--suite", choices=[*SUITES, "all"], default="all")
    v.set_defaults(func=_cmd_verify)

    m = sub.add_parser("mesh", help="generate a primal mesh in poly2d format")
    m.add_argument("--kind", choices=["rectangular", "triangular", "distorted"], required=True)
    m.add_argument("--nx", type=int, default=4)
    m.add_argument("--ny", type=int)
    m.add_argument("--x0", type=float, default=0.0)
    m.add_argument("--x1", type=float, default=1.0)
    m.add_argument("--y0", type=float, default=0.0)
    m.add_argument("--y1", type=float, default=1.0)
    m.add_argument("--distortion", type=float, default=0.0)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--subdomain", choices=["stokes", "darcy"], default="stokes")
    m.add_argument("--interface-side", choices=["top", "bottom", "left", "right"])
    m.add_argument("--rho", type=float, default=0.0, help="regularity threshold")
    m.add_argument("--out", required=True)
    m.set_defaults(func=_cmd_mesh)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, MeshError, OSError, ValueError) as exc:
        print(f"sdg: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
