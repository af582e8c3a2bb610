"""Command-line driver.

Exit codes: 0 success, 1 solver did not converge (reports are still
written), 2 bad configuration, mesh or I/O.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import ConfigurationError, ConvergenceError, MeshError
from .fileio import parse_config, write_convergence_csv, write_vtk
from .mesh import load_msh
from .outer import run_nisp

EXIT_OK, EXIT_NOT_CONVERGED, EXIT_USAGE = 0, 1, 2


def _build_parser():
    parser = argparse.ArgumentParser(prog="stokes-tresca", description=__doc__.splitlines()[0])
    parser.add_argument("--quiet", action="store_true", help="only report errors")
    sub = parser.add_subparsers(dest="command", required=True)
    solve = sub.add_parser("solve", help="solve the problem described by a config file")
    solve.add_argument("config", help="key = value run file")
    solve.add_argument("--output-dir", help="overrides output.dir from the config")
    solve.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS)
    info = sub.add_parser("mesh-info", help="summarise a Gmsh 2.2 mesh")
    info.add_argument("msh")
    info.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS)
    verify = sub.add_parser("verify", help="run the reference cross-checks")
    verify.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS)
    return parser


def _write_outputs(run, mesh, result, out_dir):
    written = []
    if "vtk" in run.formats:
        path = out_dir / "solution.vtk"
        write_vtk(mesh, result.velocity, result.pressure, result.divergence, path)
        written.append(path)
    if "csv" in run.formats:
        path = out_dir / "convergence.csv"
        write_convergence_csv(result.report, path)
        written.append(path)
    return written


def _solve(args, say):
    run = parse_config(args.config)
    out_dir = Path(args.output_dir if args.output_dir is not None else Path(run.base_dir) / run.output_dir)
    mesh = run.build_mesh()
    force = run.build_force(mesh)
    code = EXIT_OK
    try:
        result = run_nisp(mesh, force, run.solver)
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        result, code = exc.state, EXIT_NOT_CONVERGED
    for path in _write_outputs(run, mesh, result, out_dir):
        say(f"wrote {path}")
    rep = result.report
    if rep.iterations:
        say(f"outer iterations: {rep.iterations}, inner iterations: {rep.total_inner_iterations}, "
            f"final ||div u||: {rep.div_l2[-1]:.3e}")
    if code == EXIT_OK and not rep.div_converged:
        say(f"note: ||div u|| = {rep.div_l2[-1]:.3e} is above div_tol = {run.solver.div_tol:g}")
    return code


def _mesh_info(args, say):
    mesh = load_msh(args.msh)
    print(json.dumps(mesh.summary(), indent=2, default=float))
    return EXIT_OK


def _verify(args, say):
    from .verify import run_all

    results = run_all()
    for r in results:
        if not r.passed:
            print(r.line(), file=sys.stderr)
        else:
            say(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_NOT_CONVERGED


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    say = (lambda msg: None) if args.quiet else print
    handler = {"solve": _solve, "mesh-info": _mesh_info, "verify": _verify}[args.command]
    try:
        return handler(args, say)
    except (ConfigurationError, MeshError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
