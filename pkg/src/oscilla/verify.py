"""
Self-verification suite.

Runs the analytic, oracle and property checks of the pipeline at desk-scale
sizes and reports one pass/fail result per check.
"""

import math
import logging
import time
from dataclasses import asdict, dataclass
from functools import cached_property
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from oscilla.cell import (CellSolution, compute_q0, h1_norm, richardson_q0, solve_cell, solve_X0,
                          solve_Xeps, theta_compatibility, x0_system)
from oscilla.convergence import ConvergenceReport, SweepConfig, fit_rate, run_sweep
from oscilla.correctors import L2, cell_scaling_check, norm_rescaled, plain_norm
from oscilla.exceptions import OscillaError
from oscilla.fem import ScalarField, WeightedForm, assemble, l2_h1_errors, solve_spd
from oscilla.homogenized import TrigPoly, residual_check, solve_homogenized
from oscilla.mesh import build_box_mesh, build_cell_mesh, build_strip_mesh, mesh_area, mesh_h
from oscilla.profile import EpsilonValue, make_profile
from oscilla.strip import StripMeshParams

logger = logging.getLogger(__name__)

SEED = 20240229

DECAY_LADDER = (4, 8, 16, 32)
RATE_LADDER = (2, 3, 4, 6)
RATE_STRIP = StripMeshParams(96, 48)
RATE_CELL = (256, 128)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


class VerifyContext:
    """
    Shared inputs of the checks; expensive solves are computed once.

    The decay sweep runs the ladder 1/4 ... 1/32 at a fixed per-cell
    resolution. The rate sweep fits slopes on larger eps with finer meshes and
    the mesh check on; the P1 error of the strip solve does not shrink with
    eps, and at eps = 1/32 it exceeds e2 on any affordable mesh.

    Args:
        perturb_q0: Shift applied to q0 before the identity check.
        tol: CG tolerance of every solve.
        rate_ladder: m values (eps = 1/m) of the rate sweep.
        rate_strip: Strip resolution per cell of the rate sweep.
        rate_cell: (ny, nz) of the rate sweep's cell mesh.
    """

    def __init__(self, perturb_q0: float = 0.0, tol: float = 1e-11,
                 rate_ladder: Sequence[int] = RATE_LADDER,
                 rate_strip: StripMeshParams = RATE_STRIP,
                 rate_cell: Tuple[int, int] = RATE_CELL):
        self.perturb_q0 = perturb_q0
        self.tol = tol
        self.profile = make_profile(1.0, [(1, 0.5, 0.0)])
        self.forcing = TrigPoly.cos(1)
        self.rate_ladder = tuple(rate_ladder)
        self.rate_strip = rate_strip
        self.rate_cell = tuple(rate_cell)

    @cached_property
    def cell(self) -> CellSolution:
        return solve_cell(self.profile, 128, 32, with_theta=True, tol=self.tol)

    @cached_property
    def report(self) -> ConvergenceReport:
        config = SweepConfig(self.profile, self.forcing,
                             ladder=tuple(EpsilonValue(m) for m in DECAY_LADDER),
                             cell_ny=128, cell_nz=32, strip=StripMeshParams(32, 16),
                             tol=self.tol, mesh_check=False, jobs=1)
        return run_sweep(config, cell=self.cell)

    @cached_property
    def rate_report(self) -> ConvergenceReport:
        ny, nz = self.rate_cell
        config = SweepConfig(self.profile, self.forcing,
                             ladder=tuple(EpsilonValue(m) for m in self.rate_ladder),
                             cell_ny=ny, cell_nz=nz, strip=self.rate_strip,
                             tol=self.tol, mesh_check=True, jobs=1)
        return run_sweep(config)


CheckFn = Callable[[VerifyContext], Tuple[bool, str]]


def check_flat_profile(ctx: VerifyContext) -> Tuple[bool, str]:
    flat = make_profile(1.0)
    mesh = build_cell_mesh(flat, 128, 32)
    X0 = solve_X0(flat, mesh, ctx.tol)
    q0 = compute_q0(X0, mesh)[0]
    norm = h1_norm(X0)
    return norm <= 1e-8 and abs(q0 - 1.0) <= 1e-8, f"||X0||_H1={norm:.3e}, |q0-1|={abs(q0 - 1.0):.3e}"


def check_q0_identity(ctx: VerifyContext) -> Tuple[bool, str]:
    q0 = ctx.cell.q0 + ctx.perturb_q0
    gap = abs(q0 - ctx.cell.q0_energy)
    _, values, _ = richardson_q0(ctx.profile, [(128, 32), (256, 64), (512, 128)], ctx.tol)
    # two-level extrapolations at nominal order 2 from consecutive pairs
    coarse = values[1] + (values[1] - values[0]) / 3.0
    fine = values[2] + (values[2] - values[1]) / 3.0
    drift = abs(fine - coarse)
    passed = 0.0 < q0 < 1.0 and gap <= 1e-7 and drift <= 1e-5
    return passed, f"q0={q0:.12g}, identity gap={gap:.3e}, extrapolation drift={drift:.3e}"


def check_compatibility(ctx: VerifyContext) -> Tuple[bool, str]:
    mesh = ctx.cell.mesh
    system = x0_system(mesh)
    load_mean = abs(float(np.sum(system.rhs)))
    load_norm = float(np.linalg.norm(system.rhs))
    theta = abs(theta_compatibility(ctx.cell.X0, ctx.cell.q0, mesh))
    area = mesh_area(mesh)
    passed = load_mean <= 1e-12 * load_norm and theta <= 1e-10 * area
    return passed, f"X0 load mean={load_mean:.3e} (norm {load_norm:.3e}), Theta source={theta:.3e}"


def check_xeps_continuity(ctx: VerifyContext) -> Tuple[bool, str]:
    mesh = ctx.cell.mesh
    distances = []
    for m in (4, 8, 16):
        Xe = solve_Xeps(ctx.profile, EpsilonValue(m), mesh, ctx.tol)
        distances.append(h1_norm(ScalarField(mesh, Xe.values - ctx.cell.X0.values)))
    decreasing = all(b < a for a, b in zip(distances, distances[1:]))
    passed = decreasing and distances[-1] <= 0.5 * distances[0]
    return passed, "||X^eps - X0||_H1 = " + ", ".join(f"{d:.4e}" for d in distances)


def check_homogenized_exact(ctx: VerifyContext) -> Tuple[bool, str]:
    rng = np.random.default_rng(SEED)
    worst = 0.0
    for _ in range(20):
        count = int(rng.integers(1, 9))
        ks = rng.choice(np.arange(1, 17), size=count, replace=False)
        f = TrigPoly.create(float(rng.uniform(-1, 1)),
                            [(int(k), float(rng.uniform(-1, 1)), float(rng.uniform(-1, 1))) for k in ks])
        q0 = float(rng.uniform(0.1, 1.0))
        worst = max(worst, residual_check(q0, f, solve_homogenized(q0, f)))
    w0 = solve_homogenized(1.0, TrigPoly.cos(1))
    x = np.linspace(0.0, 2.0 * math.pi, 257)
    exact = float(np.max(np.abs(w0(x) - 0.5 * np.cos(x))))
    return worst <= 1e-12 and exact <= 1e-15, f"max residual={worst:.3e}, |w0 - cos/2|={exact:.3e}"


def _manufactured_errors(n: int, tol: float) -> Tuple[float, float, float]:
    mesh = build_box_mesh(1.0, 1.0, n, n)
    k = math.pi
    form = WeightedForm(alpha=1.0, beta=1.0, mu=1.0,
                        rhs_density=lambda x, y: (1.0 + 2.0 * k * k) * np.cos(k * x) * np.cos(k * y))
    u = solve_spd(assemble(mesh, form), tol=tol)
    e0, e1 = l2_h1_errors(
        u,
        lambda x, y: np.cos(k * x) * np.cos(k * y),
        lambda x, y: (-k * np.sin(k * x) * np.cos(k * y), -k * np.cos(k * x) * np.sin(k * y)),
    )
    return mesh_h(mesh), e0, e1


def check_fem_convergence(ctx: VerifyContext) -> Tuple[bool, str]:
    results = [_manufactured_errors(n, ctx.tol) for n in (8, 16, 32, 64)]
    p0 = fit_rate([(h, e0) for h, e0, _ in results])[0]
    p1 = fit_rate([(h, e1) for h, _, e1 in results])[0]
    passed = abs(p0 - 2.0) <= 0.15 and abs(p1 - 1.0) <= 0.15
    return passed, f"L2 slope={p0:.3f}, H1 slope={p1:.3f}"


def check_scaling_bounds(ctx: VerifyContext) -> Tuple[bool, str]:
    cell = solve_cell(ctx.profile, 64, 16, with_theta=True, tol=ctx.tol)
    worst = 0.0
    failed: List[str] = []
    for m in (4, 8, 16):
        eps = EpsilonValue(m)
        strip_mesh = build_strip_mesh(ctx.profile, eps, 64, 16)
        report = cell_scaling_check(cell, eps, strip_mesh, slack=1e-2, raise_on_failure=False)
        worst = max(worst, max(entry.ratio for entry in report.values()))
        failed.extend(f"{name}@{eps}" for name, entry in report.items() if not entry.passed)
    detail = f"largest lhs/bound ratio={worst:.6f}"
    if failed:
        detail += f", above bound: {', '.join(failed)}"
    return not failed, detail


def check_corrector_convergence(ctx: VerifyContext) -> Tuple[bool, str]:
    report = ctx.report
    if report.failed_rows:
        return False, f"{len(report.failed_rows)} sweep row(s) failed"
    e1 = report.curve('e1')
    decreasing = all(b < a for a, b in zip(e1, e1[1:]))
    passed = decreasing and e1[-1] <= 0.5 * e1[0]
    return passed, "e1 = " + ", ".join(f"{e:.4e}" for e in e1)


def check_error_rate(ctx: VerifyContext) -> Tuple[bool, str]:
    report = ctx.rate_report
    if report.failed_rows:
        return False, f"{len(report.failed_rows)} sweep row(s) failed"
    fits = report.fits
    if fits.get('e1') is None or fits.get('e2') is None:
        return False, "rate fit unavailable"
    p1, p2 = fits['e1'].slope, fits['e2'].slope
    limited = report.mesh_limited['e1'] or report.mesh_limited['e2']
    ordered = all(r.e2 <= 1.1 * r.e1 for r in report.rows)
    passed = p1 >= 0.45 and p2 >= 0.45 and not limited and ordered
    return passed, f"p1={p1:.3f}, p2={p2:.3f}, mesh-limited={limited}, e2<=1.1 e1: {ordered}"


def check_norm_identities(ctx: VerifyContext) -> Tuple[bool, str]:
    a0 = 1.0
    flat = make_profile(a0)
    worst_const = 0.0
    for m in (4, 8):
        eps = EpsilonValue(m)
        mesh = build_strip_mesh(flat, eps, 4, 512)
        one = ScalarField(mesh, np.ones(mesh.num_vertices)).sample()
        value = norm_rescaled(one, L2, mesh, eps) ** 2
        exact = 2.0 * math.pi * math.sin(eps.value * a0) / eps.value
        worst_const = max(worst_const, abs(value - exact) / exact)

    rng = np.random.default_rng(SEED)
    worst_scale = 0.0
    eps = EpsilonValue(8)
    mesh = build_strip_mesh(ctx.profile, eps, 8, 4)
    for _ in range(5):
        sample = ScalarField(mesh, rng.standard_normal(mesh.num_vertices)).sample()
        lhs = norm_rescaled(sample, L2, mesh, eps)
        rhs = plain_norm(sample, mesh) / math.sqrt(eps.value)
        worst_scale = max(worst_scale, abs(lhs - rhs) / rhs)
    passed = worst_const <= 1e-10 and worst_scale <= 1e-12
    return passed, f"constant-profile rel. error={worst_const:.3e}, rescaling rel. error={worst_scale:.3e}"


def check_determinism(ctx: VerifyContext) -> Tuple[bool, str]:
    rows = []
    for jobs in (1, 2):
        config = SweepConfig(ctx.profile, ctx.forcing,
                             ladder=tuple(EpsilonValue(m) for m in (4, 8, 16)),
                             cell_ny=64, cell_nz=16, strip=StripMeshParams(16, 8),
                             tol=ctx.tol, mesh_check=False, jobs=jobs)
        report = run_sweep(config)
        rows.append([row.csv_cells()[:-1] for row in report.rows])
    return rows[0] == rows[1], f"{len(rows[0])} rows compared across jobs=1 and jobs=2"


CHECKS: Dict[str, CheckFn] = {
    'flat_profile': check_flat_profile,
    'q0_identity': check_q0_identity,
    'compatibility': check_compatibility,
    'xeps_continuity': check_xeps_continuity,
    'homogenized_exact': check_homogenized_exact,
    'fem_convergence': check_fem_convergence,
    'scaling_bounds': check_scaling_bounds,
    'corrector_convergence': check_corrector_convergence,
    'error_rate': check_error_rate,
    'norm_identities': check_norm_identities,
    'determinism': check_determinism,
}


def run_checks(names: Optional[Sequence[str]] = None, perturb_q0: float = 0.0,
               context: Optional[VerifyContext] = None) -> List[CheckResult]:
    """
    Run the named checks (all by default) and return their results in order.

    A check that raises an oscilla error is reported as failed with the error
    text. perturb_q0 shifts q0 before the identity check.
    """
    ctx = context or VerifyContext(perturb_q0=perturb_q0)
    selected = list(CHECKS) if names is None else list(names)
    results = []
    for name in selected:
        if name not in CHECKS:
            raise KeyError(f"unknown check: {name}")
        start = time.perf_counter()
        try:
            passed, detail = CHECKS[name](ctx)
        except OscillaError as e:
            passed, detail = False, f"{type(e).__name__}: {e}"
        seconds = time.perf_counter() - start
        level = logging.INFO if passed else logging.ERROR
        logger.log(level, f"{'PASS' if passed else 'FAIL'} {name}: {detail} ({seconds:.1f}s)")
        results.append(CheckResult(name, passed, detail, seconds))
    return results
