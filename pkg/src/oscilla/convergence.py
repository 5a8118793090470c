"""
Convergence studies over a ladder of epsilon values.

For every eps the strip problem is solved and compared with the homogenized
solution w0 and with the truncations W1, W2:

    e0 = |||w - w0|||_L2,  e1 = |||w - W1|||_H1,  e2 = |||w - W2|||_H1.

Slopes are fitted by least squares on (log eps, log e).
"""

import csv
import hashlib
import json
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from oscilla import config as settings
from oscilla.cell import CellSolution, solve_cell
from oscilla.correctors import FIRST, H1, L2, SECOND, norm_rescaled, trig_sample, truncation
from oscilla.exceptions import ConfigError, DegenerateFit, NonDecreasingError, OscillaError
from oscilla.homogenized import TrigPoly, limit_form, limit_inner, solve_homogenized
from oscilla.profile import BoundaryProfile, EpsilonValue, validate
from oscilla.strip import StripMeshParams, solve_thin

logger = logging.getLogger(__name__)

CURVES = ('e0', 'e1', 'e2')
CSV_COLUMNS = ('eps', 'dofs', 'e0', 'e1', 'e2', 'residual', 'seconds')
MESH_LIMIT_CHANGE = 0.2
DEFAULT_LADDER = (4, 8, 16, 32)


@dataclass
class SweepConfig:
    """Everything a sweep needs; outputs and jobs do not enter the config hash."""

    profile: BoundaryProfile
    forcing: TrigPoly
    ladder: Tuple[EpsilonValue, ...] = tuple(EpsilonValue(m) for m in DEFAULT_LADDER)
    cell_ny: int = 128
    cell_nz: int = 64
    strip: StripMeshParams = StripMeshParams()
    tol: float = settings.CG_TOL
    maxiter: Optional[int] = None
    mesh_check: bool = True
    jobs: int = 1
    csv_path: Optional[str] = None
    json_path: Optional[str] = None
    plot_path: Optional[str] = None

    KEYS = ('profile', 'forcing', 'ladder', 'cell', 'strip', 'solver', 'mesh_check', 'jobs', 'output')

    def __post_init__(self):
        if len(self.ladder) < 3:
            raise ConfigError(f"epsilon ladder needs at least 3 values, got {len(self.ladder)}")
        ms = [e.m for e in self.ladder]
        if any(b <= a for a, b in zip(ms, ms[1:])):
            raise ConfigError(f"epsilon ladder must be strictly decreasing, got {[str(e) for e in self.ladder]}")
        if self.jobs < 1:
            raise ConfigError(f"jobs must be >= 1, got {self.jobs}")
        if self.cell_ny < 4 * self.strip.ny_per_cell:
            logger.warning(f"Cell mesh ny={self.cell_ny} is less than 4x the strip per-cell "
                           f"resolution {self.strip.ny_per_cell}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            'profile': self.profile.to_dict(),
            'forcing': self.forcing.to_dict(),
            'ladder': [e.m for e in self.ladder],
            'cell': {'ny': self.cell_ny, 'nz': self.cell_nz},
            'strip': {'ny_per_cell': self.strip.ny_per_cell, 'nz': self.strip.nz,
                      'max_triangles': self.strip.max_triangles},
            'solver': {'tol': self.tol, 'maxiter': self.maxiter},
            'mesh_check': self.mesh_check,
            'jobs': self.jobs,
            'output': {'csv': self.csv_path, 'json': self.json_path, 'plot': self.plot_path},
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'SweepConfig':
        """
        Parse the JSON form. Unknown keys anywhere raise ConfigError. The
        ladder lists m for eps = 1/m.
        """
        strict_keys(data, cls.KEYS, 'sweep config')
        if 'profile' not in data or 'forcing' not in data:
            raise ConfigError("sweep config needs 'profile' and 'forcing'")
        cell = strict_keys(data.get('cell', {}), ('ny', 'nz'), 'cell')
        strip = strict_keys(data.get('strip', {}), ('ny_per_cell', 'nz', 'max_triangles'), 'strip')
        solver = strict_keys(data.get('solver', {}), ('tol', 'maxiter'), 'solver')
        output = strict_keys(data.get('output', {}), ('csv', 'json', 'plot'), 'output')
        defaults = StripMeshParams()
        return cls(
            profile=validate(BoundaryProfile.from_dict(data['profile'])),
            forcing=TrigPoly.from_dict(data['forcing']),
            ladder=tuple(EpsilonValue(require_int(m, 'ladder entry')) for m in data.get('ladder', DEFAULT_LADDER)),
            cell_ny=require_int(cell.get('ny', 128), 'cell.ny'),
            cell_nz=require_int(cell.get('nz', 64), 'cell.nz'),
            strip=StripMeshParams(require_int(strip.get('ny_per_cell', defaults.ny_per_cell), 'strip.ny_per_cell'),
                                  require_int(strip.get('nz', defaults.nz), 'strip.nz'),
                                  strip.get('max_triangles')),
            tol=float(solver.get('tol', settings.CG_TOL)),
            maxiter=solver.get('maxiter'),
            mesh_check=bool(data.get('mesh_check', True)),
            jobs=require_int(data.get('jobs', 1), 'jobs'),
            csv_path=output.get('csv'),
            json_path=output.get('json'),
            plot_path=output.get('plot'),
        )

    def config_hash(self) -> str:
        payload = self.to_dict()
        payload.pop('jobs')
        payload.pop('output')
        text = json.dumps(payload, sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(text.encode('utf-8')).hexdigest()


def strict_keys(data: Any, allowed: Sequence[str], where: str) -> Dict[str, Any]:
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be a JSON object")
    unknown = set(data) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    return data


def require_int(value: Any, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{where} must be an integer, got {value!r}")
    return value


@dataclass
class SweepRow:
    eps: float
    m: int
    status: str = 'ok'
    dofs: int = 0
    e0: float = float('nan')
    e1: float = float('nan')
    e2: float = float('nan')
    residual: float = float('nan')
    seconds: float = 0.0
    energy_w1: float = float('nan')
    limit_energy: float = float('nan')
    energy_gap: float = float('nan')
    load: float = float('nan')
    limit_load: float = float('nan')
    refined: Dict[str, float] = field(default_factory=dict)
    error: Optional[str] = None
    refine_error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.status == 'ok'

    def csv_cells(self) -> List[str]:
        values = [self.eps, self.dofs, self.e0, self.e1, self.e2, self.residual, self.seconds]
        return [str(v) if isinstance(v, int) else f"{v:.9g}" for v in values]


@dataclass
class RateFit:
    slope: float
    intercept: float
    residual: float
    reliable: bool = True


@dataclass
class ConvergenceReport:
    rows: List[SweepRow]
    fits: Dict[str, Optional[RateFit]]
    q0: float
    q0_energy: float
    mesh_limited: Dict[str, bool]
    provenance: Dict[str, Any]

    @property
    def failed_rows(self) -> List[SweepRow]:
        return [r for r in self.rows if not r.ok]

    def curve(self, name: str) -> List[float]:
        return [getattr(r, name) for r in self.rows]

    def to_dict(self) -> Dict[str, Any]:
        return {
            'rows': [asdict(r) for r in self.rows],
            'fits': {k: (asdict(v) if v else None) for k, v in self.fits.items()},
            'q0': self.q0,
            'q0_energy': self.q0_energy,
            'mesh_limited': dict(self.mesh_limited),
            'provenance': self.provenance,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ConvergenceReport':
        return cls(
            rows=[SweepRow(**r) for r in data['rows']],
            fits={k: (RateFit(**v) if v else None) for k, v in data['fits'].items()},
            q0=data['q0'],
            q0_energy=data['q0_energy'],
            mesh_limited=data['mesh_limited'],
            provenance=data['provenance'],
        )

    def write_json(self, path: str) -> None:
        ensure_dir(path)
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(self.to_dict(), f, indent=2)
        logger.info(f"Report saved to {path}")

    def write_csv(self, path: str) -> None:
        ensure_dir(path)
        with open(path, 'w', newline='', encoding='utf-8') as f:
            writer = csv.writer(f)
            writer.writerow(CSV_COLUMNS)
            for row in self.rows:
                writer.writerow(row.csv_cells())
        logger.info(f"CSV saved to {path}")

    def write_gnuplot(self, data_path: str, script_path: str) -> None:
        """Write a whitespace data file and a .plt script drawing the log-log curves."""
        ensure_dir(data_path)
        with open(data_path, 'w', encoding='utf-8') as f:
            f.write("# eps dofs e0 e1 e2\n")
            for r in self.rows:
                if r.ok:
                    f.write(f"{r.eps:.17g} {r.dofs} {r.e0:.17g} {r.e1:.17g} {r.e2:.17g}\n")
        data_name = os.path.basename(data_path)
        lines = [
            "set logscale xy",
            "set xlabel 'epsilon'",
            "set ylabel 'error'",
            "set key left top",
            "set grid",
            f"plot '{data_name}' using 1:3 with linespoints title 'e0 (L2, w0)', \\",
            f"     '{data_name}' using 1:4 with linespoints title 'e1 (H1, W1)', \\",
            f"     '{data_name}' using 1:5 with linespoints title 'e2 (H1, W2)', \\",
            f"     '{data_name}' using 1:(sqrt($1)*{self._anchor():.17g}) with lines dashtype 2 title 'sqrt(eps)'",
        ]
        ensure_dir(script_path)
        with open(script_path, 'w', encoding='utf-8') as f:
            f.write("\n".join(lines) + "\n")
        logger.info(f"Gnuplot script saved to {script_path}")

    def _anchor(self) -> float:
        ok = [r for r in self.rows if r.ok and r.e1 > 0]
        return ok[0].e1 / math.sqrt(ok[0].eps) if ok else 1.0

    def plot(self, path: str) -> None:
        """Save a log-log figure of the error curves."""
        import matplotlib
        matplotlib.use('Agg')
        import matplotlib.pyplot as plt

        ok = [r for r in self.rows if r.ok]
        eps = [r.eps for r in ok]
        fig, ax = plt.subplots(1, 1, figsize=(7, 5))
        for name, marker in zip(CURVES, 'os^'):
            ax.loglog(eps, [getattr(r, name) for r in ok], marker + '-', lw=2, label=name)
        if ok:
            ax.loglog(eps, [self._anchor() * math.sqrt(e) for e in eps], 'k--', label='sqrt(eps)')
        ax.set_xlabel('epsilon')
        ax.set_ylabel('error')
        ax.grid(True, which='both', alpha=0.3)
        ax.legend()
        ensure_dir(path)
        fig.savefig(path, dpi=150, bbox_inches='tight')
        plt.close(fig)
        logger.info(f"Figure saved to {path}")


def ensure_dir(path: str) -> None:
    output_dir = os.path.dirname(path)
    if output_dir and not os.path.exists(output_dir):
        os.makedirs(output_dir)


def fit_rate(points: Sequence[Tuple[float, float]]) -> Tuple[float, float, float]:
    """
    Least-squares fit of log(error) = p log(eps) + c.

    Returns (p, c, residual) where residual is the 2-norm of the log misfit.

    Raises:
        DegenerateFit: fewer than 3 points, a non-positive error, or all eps equal.
    """
    if len(points) < 3:
        raise DegenerateFit(f"rate fit needs at least 3 points, got {len(points)}")
    eps = np.array([p[0] for p in points], dtype=float)
    err = np.array([p[1] for p in points], dtype=float)
    if np.any(~np.isfinite(err)) or np.any(err <= 0.0) or np.any(eps <= 0.0):
        raise DegenerateFit("rate fit needs positive finite errors and eps")
    if np.all(eps == eps[0]):
        raise DegenerateFit("rate fit needs at least two distinct eps values")
    x, y = np.log(eps), np.log(err)
    slope, intercept = np.polyfit(x, y, 1)
    residual = float(np.linalg.norm(slope * x + intercept - y))
    return float(slope), float(intercept), residual


def _measure(config: SweepConfig, cell: CellSolution, w0: TrigPoly, eps: EpsilonValue,
             params: StripMeshParams) -> Dict[str, float]:
    sol = solve_thin(config.profile, eps, config.forcing, params, tol=config.tol, maxiter=config.maxiter)
    mesh = sol.mesh
    w = sol.field.sample()
    W1 = truncation(FIRST, w0, cell, eps, mesh).sample
    W2 = truncation(SECOND, w0, cell, eps, mesh).sample
    return {
        'dofs': sol.dofs,
        'e0': norm_rescaled(w - trig_sample(w0, mesh), L2, mesh, eps),
        'e1': norm_rescaled(w - W1, H1, mesh, eps),
        'e2': norm_rescaled(w - W2, H1, mesh, eps),
        'residual': sol.solver_residual,
        'energy_w1': norm_rescaled(W1, H1, mesh, eps) ** 2,
        'load': float(sol.field.reduced() @ sol.system.rhs) / eps.value,
    }


def _sweep_row(config: SweepConfig, cell: CellSolution, w0: TrigPoly, eps: EpsilonValue,
               fine: Optional[Tuple[CellSolution, TrigPoly]] = None) -> SweepRow:
    """
    Measure one ladder entry. A failed solve yields a failed row with no
    numbers; a failed refined re-solve keeps the row and records refine_error.
    """
    row = SweepRow(eps=eps.value, m=eps.m)
    start = time.perf_counter()
    try:
        values = _measure(config, cell, w0, eps, config.strip)
    except OscillaError as exc:
        row.status = 'failed'
        row.error = f"{type(exc).__name__}: {exc}"
        logger.error(f"Sweep row eps={eps} failed: {row.error}")
        row.seconds = time.perf_counter() - start
        return row

    row.dofs = int(values['dofs'])
    for key in ('e0', 'e1', 'e2', 'residual', 'energy_w1', 'load'):
        setattr(row, key, values[key])
    g_hat = config.profile.mean
    row.limit_energy = limit_form(cell.q0, g_hat, w0, w0)
    row.energy_gap = abs(row.energy_w1 - row.limit_energy)
    row.limit_load = limit_inner(g_hat, w0, config.forcing)
    logger.info(f"eps={eps}: e0={row.e0:.6e} e1={row.e1:.6e} e2={row.e2:.6e}")

    if fine is not None:
        fine_cell, fine_w0 = fine
        try:
            refined = _measure(config, fine_cell, fine_w0, eps, config.strip.refined())
            row.refined = {k: refined[k] for k in CURVES}
        except OscillaError as exc:
            row.refine_error = f"{type(exc).__name__}: {exc}"
            logger.warning(f"Refined re-solve for eps={eps} failed, rates marked unreliable: {row.refine_error}")
    row.seconds = time.perf_counter() - start
    return row


def _refined_cell(config: SweepConfig, cell: CellSolution) -> Optional[Tuple[CellSolution, TrigPoly]]:
    """The cell problems on a mesh with half the spacing, or None if that solve fails."""
    try:
        fine = solve_cell(cell.profile, 2 * cell.mesh.ncols, 2 * cell.mesh.nrows,
                          with_theta=True, tol=config.tol)
    except OscillaError as exc:
        logger.warning(f"Refined cell solve failed, rates marked unreliable: {type(exc).__name__}: {exc}")
        return None
    return fine, solve_homogenized(fine.q0, config.forcing)


def run_sweep(config: SweepConfig, cell: Optional[CellSolution] = None) -> ConvergenceReport:
    """
    Run the epsilon sweep. Rows run concurrently up to config.jobs and are
    reported in ladder order; failed rows are kept and marked.

    With mesh_check every row is re-measured with both the strip and the cell
    mesh spacing halved; a curve whose error moves by more than 20% on any row,
    or whose refined measurement is missing, gets an unreliable rate.
    """
    profile = config.profile if config.profile.validated else validate(config.profile)
    if cell is None:
        cell = solve_cell(profile, config.cell_ny, config.cell_nz, with_theta=True, tol=config.tol)
    w0 = solve_homogenized(cell.q0, config.forcing)
    logger.info(f"Sweep over {[str(e) for e in config.ladder]} with {config.jobs} job(s), q0={cell.q0:.12g}")

    fine = _refined_cell(config, cell) if config.mesh_check else None

    with ThreadPoolExecutor(max_workers=config.jobs) as pool:
        rows = list(pool.map(lambda e: _sweep_row(config, cell, w0, e, fine), config.ladder))

    mesh_limited = {name: False for name in CURVES}
    if config.mesh_check:
        for name in CURVES:
            for r in rows:
                if not r.ok:
                    continue
                if name not in r.refined:
                    mesh_limited[name] = True
                    continue
                base = getattr(r, name)
                if base > 0 and abs(r.refined[name] - base) > MESH_LIMIT_CHANGE * base:
                    mesh_limited[name] = True
            if mesh_limited[name]:
                logger.warning(f"Curve {name} is mesh-limited; its rate is marked unreliable")

    fits: Dict[str, Optional[RateFit]] = {}
    for name in CURVES:
        points = [(r.eps, getattr(r, name)) for r in rows if r.ok]
        try:
            slope, intercept, residual = fit_rate(points)
            fits[name] = RateFit(slope, intercept, residual, reliable=not mesh_limited[name])
            logger.info(f"Fitted slope {name}: {slope:.4f}")
        except DegenerateFit as exc:
            logger.warning(f"No rate for {name}: {exc}")
            fits[name] = None

    provenance = {
        'config_hash': config.config_hash(),
        'cell_mesh': {'ny': cell.mesh.ncols, 'nz': cell.mesh.nrows},
        'strip_mesh': {'ny_per_cell': config.strip.ny_per_cell, 'nz': config.strip.nz},
        'refined_cell_mesh': ({'ny': fine[0].mesh.ncols, 'nz': fine[0].mesh.nrows} if fine else None),
        'g_hat': config.profile.mean,
    }
    return ConvergenceReport(rows, fits, cell.q0, cell.q0_energy, mesh_limited, provenance)


def weak_limit_check(config: SweepConfig, report: Optional[ConvergenceReport] = None,
                     slack: float = 0.05) -> Dict[str, Any]:
    """
    Check that e0 and e1 decrease along the ladder and that e1 at the smallest
    eps is at most half of e1 at the largest.

    Raises:
        ConfigError: fewer than 3 ladder values.
        NonDecreasingError: a curve grows by more than the slack, or e1 does not halve.
    """
    if len(config.ladder) < 3:
        raise ConfigError("weak limit check needs at least 3 ladder values")
    report = report or run_sweep(config)
    if report.failed_rows:
        raise NonDecreasingError('e1', f"{len(report.failed_rows)} sweep row(s) failed")
    result: Dict[str, Any] = {}
    for name in ('e0', 'e1'):
        values = report.curve(name)
        for prev, nxt in zip(values, values[1:]):
            if not nxt < prev * (1.0 + slack):
                raise NonDecreasingError(name, f"{nxt:.6e} after {prev:.6e}")
        result[name] = values
    e1 = report.curve('e1')
    ratio = e1[-1] / e1[0] if e1[0] > 0 else 0.0
    if ratio > 0.5:
        raise NonDecreasingError('e1', f"smallest-eps error is {ratio:.3f} of the largest-eps error")
    result['e1_ratio'] = ratio
    return result
