"""Command-line front end: ``emsplit run | converge | hybrid | bodies-check``.

Exit status is 0 on success, 1 for configuration or usage errors and 2 for
runtime failures (a step that fails, a convergence run that fails).
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import harness
from .errors import ConfigError, EmsplitError
from .model import angular_momentum, center_of_mass, linear_momentum, total_energy

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="PATH", help="flat key = value configuration file")
    p.add_argument("--out", metavar="DIR", default="emsplit-out", help="output directory")
    p.add_argument("--system", help="|".join(harness.SYSTEMS))
    p.add_argument("--integrator", help="mp, lg, ge, pm or pt")
    p.add_argument("--dt", help="step size")
    p.add_argument("--T", dest="T", help="final time")
    p.add_argument("--tol-q", dest="tol_q", help="quotient switch tolerance")
    p.add_argument("--rescue", help="janz, gonzalez, ge, pm or pt")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="emsplit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    _common(sub.add_parser("run", help="integrate one system and write CSV files"))
    _common(sub.add_parser("converge", help="convergence study against a mid-point reference"))
    _common(sub.add_parser("hybrid", help="LaBudde-Greenspan quotient-switch study"))
    check = sub.add_parser("bodies-check", help="validate a bodies file and print its invariants")
    check.add_argument("path", nargs="?", help="bodies file (default: bundled solar system)")
    return parser


def _config(args, command: str) -> harness.ExperimentConfig:
    overrides = {
        "system": args.system, "integrator": args.integrator, "dt": args.dt, "t": args.T,
        "tol_q": args.tol_q, "rescue": args.rescue,
    }
    if args.config:
        return harness.load_config(args.config, command, overrides)
    return harness.parse_config("", command, None, overrides)


def _cmd_run(args) -> int:
    cfg = _config(args, "run")
    outcome = harness.run(cfg, args.out)
    traj, series = outcome.trajectory, outcome.series
    scale = abs(series.H0) or 1.0
    print(f"{cfg.system} {cfg.integrator.short} dt={cfg.dt!r} T={cfg.T!r}: "
          f"{traj.n_steps} steps, {traj.total_iterations} corrections, "
          f"{traj.total_switches} quotient switches, {traj.unconverged_steps} unconverged")
    print(f"H0 = {series.H0!r}  final dH = {float(series.dH[-1])!r}  "
          f"max |dH|/|H0| = {np.abs(series.dH).max() / scale:.3e}")
    for name, path in outcome.files.items():
        print(f"wrote {name}: {path}")
    if outcome.error is not None:
        print(f"error: {outcome.error}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def _cmd_converge(args) -> int:
    cfg = _config(args, "converge")
    try:
        rows, check = harness.converge(cfg, args.out)
    except EmsplitError as exc:
        if isinstance(exc, ConfigError):
            raise
        for row in getattr(exc, "rows", []):
            if row.failed:
                print(f"dt={row.dt!r}: {row.message}", file=sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"{cfg.system} {cfg.integrator.short} T={cfg.T!r} reference dt={cfg.reference_dt!r}")
    if check is not None:
        print(f"reference discrepancy at twice the step: q {check.discrepancy_q:.3e}, "
              f"p {check.discrepancy_p:.3e}")
    print(f"{'dt':>10} {'err_q':>11} {'order_q':>8} {'err_p':>11} {'order_p':>8}")
    for r in rows:
        oq = "" if math.isnan(r.order_q) else f"{r.order_q:.2f}"
        op = "" if math.isnan(r.order_p) else f"{r.order_p:.2f}"
        print(f"{r.dt:>10.3g} {r.rel_err_q:>11.3e} {oq:>8} {r.rel_err_p:>11.3e} {op:>8}")
    print(f"wrote {Path(args.out) / 'convergence.csv'}")
    return EXIT_OK


def _cmd_hybrid(args) -> int:
    cfg = _config(args, "hybrid")
    results = harness.hybrid_study(cfg, args.out)
    status = EXIT_OK
    for r in results:
        scale = abs(r.H0) or 1.0
        print(f"{r.label:>24}: switches {r.switch_count:>7}  unconverged {r.unconverged_steps:>4}  "
              f"max dH/|H0| {r.dH.max() / scale:+.3e}  final dH/|H0| {r.dH[-1] / scale:+.3e}")
        if r.error is not None:
            print(f"error ({r.label}): {r.error}", file=sys.stderr)
            status = EXIT_RUNTIME
    print(f"wrote {Path(args.out) / 'hybrid_summary.csv'}")
    return status


def _cmd_bodies_check(args) -> int:
    path = args.path or harness.solar_system_path()
    spec, state, bodies = harness.solar_system(path)
    print(f"{path}: {len(bodies)} bodies, G = {bodies.G!r}, units = {bodies.units or '?'}")
    for b in bodies:
        print(f"  {b.name:<12} mass {b.mass:.6e}")
    print(f"H0 = {total_energy(state, spec)!r}")
    print(f"J0 = {angular_momentum(state).tolist()}")
    print(f"L0 = {linear_momentum(state).tolist()}")
    print(f"C0 = {center_of_mass(state, spec.mass).tolist()}")
    return EXIT_OK


_COMMANDS = {
    "run": _cmd_run,
    "converge": _cmd_converge,
    "hybrid": _cmd_hybrid,
    "bodies-check": _cmd_bodies_check,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Entry point; returns the exit status."""
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except EmsplitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
