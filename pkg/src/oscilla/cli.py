"""
Command Line Interface module for the oscilla package.
"""

import argparse
import json
import logging
import os
import sys
from typing import Any, Dict, List, Optional, TextIO

from oscilla import __version__
from oscilla import config as settings
from oscilla.cell import solve_cell
from oscilla.convergence import ConvergenceReport, ensure_dir, run_sweep
from oscilla.db import CacheManager
from oscilla.exceptions import OscillaError
from oscilla.fem import write_matrix_market
from oscilla.homogenized import residual_check, solve_homogenized
from oscilla.mesh import write_mesh
from oscilla.runconfig import RunConfig, cell_estimate, mesh_estimate
from oscilla.strip import apriori_check, energy_check, solve_thin
from oscilla.verify import CHECKS, run_checks

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_PARTIAL = 4


def emit_json(document: Dict[str, Any], output: Optional[str] = None, stream: Optional[TextIO] = None) -> None:
    """Write a JSON document to a file, or to a stream when no path is given.

    Args:
        document: JSON-serializable dictionary.
        output: Optional output path.
        stream: Where the document or the saved-path notice goes (default stdout).
    """
    stream = stream or sys.stdout
    text = json.dumps(document, indent=2)
    if output:
        ensure_dir(output)
        with open(output, 'w', encoding='utf-8') as f:
            f.write(text + "\n")
        print(f"Results saved to {output}", file=stream)
    else:
        print(text, file=stream)


def open_cache(args) -> Optional[CacheManager]:
    """Return the result cache unless disabled or unconfigured."""
    if getattr(args, 'no_cache', False) or not settings.cache_dir():
        return None
    return CacheManager.from_environment()


def handle_validate_profile(args) -> int:
    """Validate the profile of a run config and print its extrema.

    Args:
        args: Command-line arguments.

    Returns:
        Exit code.
    """
    run = RunConfig.load(args.config)
    if args.dry_run:
        emit_json({'profile': run.profile.to_dict()})
        return EXIT_OK
    profile = run.checked_profile()
    emit_json({
        'valid': True,
        'g1': profile.g1,
        'g_min': profile.g_min,
        'period': profile.period,
        'mean': profile.mean,
    }, args.output)
    return EXIT_OK


def _cell_summary(run: RunConfig, cache: Optional[CacheManager]) -> Dict[str, Any]:
    key = run.cell_hash()
    if cache is not None:
        cached = cache.get_cell(key)
        if cached is not None:
            logger.info(f"Using cached cell result {key[:12]}")
            return cached
    cell = solve_cell(run.checked_profile(), run.cell_ny, run.cell_nz, with_theta=True, tol=run.tol)
    summary = cell.summary()
    if cache is not None:
        cache.store_cell(key, summary)
    return summary


def handle_cell_solve(args) -> int:
    """Solve the cell problems and print the q0 summary."""
    run = RunConfig.load(args.config)
    if args.dry_run:
        emit_json({'cell': {'ny': run.cell_ny, 'nz': run.cell_nz},
                   'estimate': cell_estimate(run.cell_ny, run.cell_nz),
                   'config_hash': run.cell_hash()})
        return EXIT_OK
    emit_json(_cell_summary(run, open_cache(args)), args.output)
    return EXIT_OK


def handle_homogenize(args) -> int:
    """Solve the homogenized equation, taking q0 from the config or a cell solve."""
    run = RunConfig.load(args.config)
    if args.dry_run:
        emit_json({'q0': run.q0, 'forcing': run.forcing.to_dict(),
                   'cell': None if run.q0 is not None else {'ny': run.cell_ny, 'nz': run.cell_nz}})
        return EXIT_OK
    q0 = run.q0
    if q0 is None:
        q0 = _cell_summary(run, open_cache(args))['q0']
    w0 = solve_homogenized(q0, run.forcing)
    emit_json({'q0': q0, 'w0': w0.to_dict(), 'residual': residual_check(q0, run.forcing, w0)},
              args.output)
    return EXIT_OK


def handle_solve(args) -> int:
    """Solve the strip problem for one eps; write the mesh dump and a JSON summary.

    Without --mesh the dump goes to stdout and the summary to stderr, so stdout
    stays a valid mesh file.
    """
    run = RunConfig.load(args.config)
    eps = run.require_eps()
    profile = run.checked_profile()
    if args.dry_run:
        emit_json({'eps': eps.value, 'm': eps.m, 'strip': mesh_estimate(profile, eps, run.strip)})
        return EXIT_OK
    sol = solve_thin(profile, eps, run.forcing, run.strip, tol=run.tol, maxiter=run.maxiter)
    summary_stream = sys.stdout
    if args.mesh:
        ensure_dir(args.mesh)
        with open(args.mesh, 'w', encoding='utf-8') as f:
            write_mesh(sol.mesh, f, sol.field.values)
        logger.info(f"Mesh and solution written to {args.mesh}")
    else:
        write_mesh(sol.mesh, sys.stdout, sol.field.values)
        summary_stream = sys.stderr
    if args.matrix_market:
        ensure_dir(args.matrix_market)
        write_matrix_market(sol.system, args.matrix_market)
    w_norm, f_norm = apriori_check(sol)
    logger.info(f"|||w|||_L2={w_norm:.6e} <= |||f|||_L2={f_norm:.6e}")
    emit_json({'eps': eps.value, 'dofs': sol.dofs, 'residual': sol.solver_residual,
               'energy_check': energy_check(sol)}, args.output, stream=summary_stream)
    return EXIT_OK


def _converge_paths(run: RunConfig, args) -> Dict[str, Optional[str]]:
    if args.output:
        paths = {name: os.path.join(args.output, f"convergence.{ext}")
                 for name, ext in (('csv', 'csv'), ('json', 'json'))}
        paths['plot'] = os.path.join(args.output, "convergence.png") if args.plot else None
    else:
        paths = dict(run.output)
        if args.plot and not paths.get('plot'):
            paths['plot'] = "convergence.png"
    return paths


def handle_converge(args) -> int:
    """Run the eps sweep and write CSV, JSON, the gnuplot script and the optional figure.

    Returns:
        0 on success, 4 when some sweep rows failed.
    """
    run = RunConfig.load(args.config)
    sweep = run.to_sweep(jobs=args.jobs)
    if args.dry_run:
        emit_json({
            'config': sweep.to_dict(),
            'config_hash': sweep.config_hash(),
            'cell': cell_estimate(sweep.cell_ny, sweep.cell_nz),
            'strip': [dict(eps=e.value, m=e.m, **mesh_estimate(sweep.profile, e, sweep.strip))
                      for e in sweep.ladder],
        })
        return EXIT_OK

    cache = open_cache(args)
    key = sweep.config_hash()
    report = None
    if cache is not None:
        cached = cache.get_report(key)
        if cached is not None:
            logger.info(f"Using cached sweep report {key[:12]}")
            report = ConvergenceReport.from_dict(cached)
    if report is None:
        report = run_sweep(sweep)
        if cache is not None:
            cache.store_report(key, report.to_dict())

    paths = _converge_paths(run, args)
    if paths.get('csv'):
        report.write_csv(paths['csv'])
        base = os.path.splitext(paths['csv'])[0]
        report.write_gnuplot(base + ".dat", base + ".plt")
    if paths.get('plot'):
        report.plot(paths['plot'])
    if paths.get('json'):
        report.write_json(paths['json'])
    if not paths.get('csv') and not paths.get('json'):
        emit_json(report.to_dict())

    for name, fit in report.fits.items():
        if fit is not None:
            flag = "" if fit.reliable else " (mesh-limited)"
            print(f"{name}: slope {fit.slope:.4f}{flag}")
    if report.failed_rows:
        for row in report.failed_rows:
            print(f"Row eps=1/{row.m} failed: {row.error}")
        return EXIT_PARTIAL
    return EXIT_OK


def handle_verify(args) -> int:
    """Run the self-verification suite; nonzero exit on any failure."""
    names = args.check or list(CHECKS)
    if args.dry_run:
        for name in names:
            print(name)
        return EXIT_OK
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        print(f"Error: unknown check(s): {', '.join(unknown)}", file=sys.stderr)
        return 2
    results = run_checks(names, perturb_q0=args.perturb_q0)
    for result in results:
        print(f"{'PASS' if result.passed else 'FAIL'} {result.name}: {result.detail}")
    failed = [r.name for r in results if not r.passed]
    if args.output:
        emit_json({'passed': not failed, 'checks': [r.to_dict() for r in results]}, args.output)
    if failed:
        print(f"{len(failed)} check(s) failed: {', '.join(failed)}")
        return 3
    print(f"All {len(results)} checks passed.")
    return EXIT_OK


HANDLERS = {
    'validate-profile': handle_validate_profile,
    'cell-solve': handle_cell_solve,
    'homogenize': handle_homogenize,
    'solve': handle_solve,
    'converge': handle_converge,
    'verify': handle_verify,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='oscilla',
        description='Homogenization of the Laplace-Beltrami problem on a thin oscillating strip.')
    parser.add_argument('--version', action='version', version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest='command')

    def add_common(sub, needs_config=True):
        if needs_config:
            sub.add_argument('--config', required=True, help='Path to the JSON run configuration')
        sub.add_argument('--dry-run', action='store_true',
                         help='Print the resolved configuration and size estimates without solving')
        sub.add_argument('--output', default='', help='Output path (JSON file, or directory for converge)')

    validate_parser = subparsers.add_parser('validate-profile', help='Check the boundary profile')
    add_common(validate_parser)

    cell_parser = subparsers.add_parser('cell-solve', help='Solve the cell problems and compute q0')
    add_common(cell_parser)
    cell_parser.add_argument('--no-cache', action='store_true', help='Ignore OSCILLA_CACHE_DIR')

    hom_parser = subparsers.add_parser('homogenize', help='Solve the homogenized 1D equation')
    add_common(hom_parser)
    hom_parser.add_argument('--no-cache', action='store_true', help='Ignore OSCILLA_CACHE_DIR')

    solve_parser = subparsers.add_parser('solve', help='Solve the strip problem for one eps')
    add_common(solve_parser)
    solve_parser.add_argument('--mesh', default='', help='Write the mesh and solution here instead of stdout')
    solve_parser.add_argument('--matrix-market', default='', help='Export the system matrix (.mtx)')

    converge_parser = subparsers.add_parser('converge', help='Run the eps convergence sweep')
    add_common(converge_parser)
    converge_parser.add_argument('--jobs', type=int, default=os.cpu_count() or 1,
                                 help='Rows solved concurrently (default: available cores)')
    converge_parser.add_argument('--plot', action='store_true', help='Also save a matplotlib figure')
    converge_parser.add_argument('--no-cache', action='store_true', help='Ignore OSCILLA_CACHE_DIR')

    verify_parser = subparsers.add_parser('verify', help='Run the self-verification suite')
    add_common(verify_parser, needs_config=False)
    verify_parser.add_argument('--check', action='append', help='Run only this check (repeatable)')
    verify_parser.add_argument('--perturb-q0', type=float, default=0.0, help=argparse.SUPPRESS)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """
    Main entry point for the CLI.

    Returns:
        0 ok, 2 configuration error, 3 solver or check failure, 4 partial sweep failure.
    """
    logging.basicConfig(
        level=getattr(logging, settings.LOG_LEVEL.upper(), logging.INFO),
        format=settings.LOG_FORMAT
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_help()
        return 2
    try:
        return HANDLERS[args.command](args)
    except OscillaError as e:
        logger.error(f"{type(e).__name__}: {e}")
        print(f"Error: {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
