"""
Run configuration shared by the command line subcommands.

A run configuration is one JSON document holding the profile, the forcing,
mesh sizes, solver tolerances and output paths. Every subcommand reads the
part it needs; unknown keys are rejected everywhere.
"""

import hashlib
import json
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

from oscilla import config as settings
from oscilla.convergence import DEFAULT_LADDER, SweepConfig, require_int, strict_keys
from oscilla.exceptions import ConfigError
from oscilla.homogenized import TrigPoly
from oscilla.profile import BoundaryProfile, EpsilonValue, validate
from oscilla.strip import StripMeshParams

logger = logging.getLogger(__name__)

DEFAULT_CELL_NY = 128
DEFAULT_CELL_NZ = 64


def _canonical_hash(payload: Dict[str, Any]) -> str:
    text = json.dumps(payload, sort_keys=True, separators=(',', ':'))
    return hashlib.sha256(text.encode('utf-8')).hexdigest()


@dataclass
class RunConfig:
    """
    Parsed run configuration.

    Defaults: forcing cos(phi), cell mesh 128 x 64, strip mesh 32 columns per
    cell and 16 rows, ladder 1/4, 1/8, 1/16, 1/32, CG tolerance from
    OSCILLA_CG_TOL, mesh refinement check on, one job.
    """

    profile: BoundaryProfile
    forcing: TrigPoly = TrigPoly.cos(1)
    eps: Optional[EpsilonValue] = None
    q0: Optional[float] = None
    ladder: Tuple[int, ...] = DEFAULT_LADDER
    cell_ny: int = DEFAULT_CELL_NY
    cell_nz: int = DEFAULT_CELL_NZ
    strip: StripMeshParams = StripMeshParams()
    tol: float = settings.CG_TOL
    maxiter: Optional[int] = None
    mesh_check: bool = True
    jobs: int = 1
    output: Dict[str, Optional[str]] = field(
        default_factory=lambda: {'csv': None, 'json': None, 'plot': None})

    KEYS = ('profile', 'forcing', 'eps', 'q0', 'ladder', 'cell', 'strip', 'solver',
            'mesh_check', 'jobs', 'output')

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'RunConfig':
        """Parse the JSON form; the profile is parsed but not yet validated.

        Raises:
            ConfigError: on unknown keys, missing profile or mistyped values.
        """
        strict_keys(data, cls.KEYS, 'run config')
        if 'profile' not in data:
            raise ConfigError("run config needs 'profile'")
        cell = strict_keys(data.get('cell', {}), ('ny', 'nz'), 'cell')
        strip = strict_keys(data.get('strip', {}), ('ny_per_cell', 'nz', 'max_triangles'), 'strip')
        solver = strict_keys(data.get('solver', {}), ('tol', 'maxiter'), 'solver')
        output = strict_keys(data.get('output', {}), ('csv', 'json', 'plot'), 'output')
        defaults = StripMeshParams()

        eps = data.get('eps')
        q0 = data.get('q0')
        if q0 is not None and (isinstance(q0, bool) or not isinstance(q0, (int, float))):
            raise ConfigError(f"q0 must be a number, got {q0!r}")
        max_triangles = strip.get('max_triangles')
        if max_triangles is not None:
            max_triangles = require_int(max_triangles, 'strip.max_triangles')
        maxiter = solver.get('maxiter')
        if maxiter is not None:
            maxiter = require_int(maxiter, 'solver.maxiter')
        mesh_check = data.get('mesh_check', True)
        if not isinstance(mesh_check, bool):
            raise ConfigError(f"mesh_check must be true or false, got {mesh_check!r}")

        return cls(
            profile=BoundaryProfile.from_dict(data['profile']),
            forcing=TrigPoly.from_dict(data['forcing']) if 'forcing' in data else TrigPoly.cos(1),
            eps=EpsilonValue(require_int(eps, 'eps')) if eps is not None else None,
            q0=float(q0) if q0 is not None else None,
            ladder=tuple(require_int(m, 'ladder entry') for m in data.get('ladder', DEFAULT_LADDER)),
            cell_ny=require_int(cell.get('ny', DEFAULT_CELL_NY), 'cell.ny'),
            cell_nz=require_int(cell.get('nz', DEFAULT_CELL_NZ), 'cell.nz'),
            strip=StripMeshParams(
                require_int(strip.get('ny_per_cell', defaults.ny_per_cell), 'strip.ny_per_cell'),
                require_int(strip.get('nz', defaults.nz), 'strip.nz'),
                max_triangles),
            tol=float(solver.get('tol', settings.CG_TOL)),
            maxiter=maxiter,
            mesh_check=mesh_check,
            jobs=require_int(data.get('jobs', 1), 'jobs'),
            output={key: output.get(key) for key in ('csv', 'json', 'plot')},
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            'profile': self.profile.to_dict(),
            'forcing': self.forcing.to_dict(),
            'eps': self.eps.m if self.eps else None,
            'q0': self.q0,
            'ladder': list(self.ladder),
            'cell': {'ny': self.cell_ny, 'nz': self.cell_nz},
            'strip': {'ny_per_cell': self.strip.ny_per_cell, 'nz': self.strip.nz,
                      'max_triangles': self.strip.max_triangles},
            'solver': {'tol': self.tol, 'maxiter': self.maxiter},
            'mesh_check': self.mesh_check,
            'jobs': self.jobs,
            'output': dict(self.output),
        }

    @classmethod
    def load(cls, path: str) -> 'RunConfig':
        """Read a JSON config file.

        Raises:
            ConfigError: if the file is missing or not valid JSON (with line and column).
        """
        try:
            with open(path, 'r', encoding='utf-8') as f:
                data = json.load(f)
        except FileNotFoundError:
            raise ConfigError(f"config file '{path}' not found")
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file '{path}' is not valid JSON: {e.msg} "
                              f"(line {e.lineno}, column {e.colno})")
        logger.debug(f"Loaded run config from {path}")
        return cls.from_dict(data)

    def checked_profile(self) -> BoundaryProfile:
        return self.profile if self.profile.validated else validate(self.profile)

    def require_eps(self) -> EpsilonValue:
        if self.eps is None:
            raise ConfigError("this command needs 'eps' (the integer m of eps = 1/m)")
        return self.eps

    def cell_hash(self) -> str:
        """Hash of everything a cell solve depends on."""
        return _canonical_hash({
            'profile': self.profile.to_dict(),
            'cell': {'ny': self.cell_ny, 'nz': self.cell_nz},
            'solver': {'tol': self.tol},
        })

    def to_sweep(self, jobs: Optional[int] = None) -> SweepConfig:
        """Build the sweep configuration; ladder rules are enforced here."""
        return SweepConfig(
            profile=self.checked_profile(),
            forcing=self.forcing,
            ladder=tuple(EpsilonValue(m) for m in self.ladder),
            cell_ny=self.cell_ny,
            cell_nz=self.cell_nz,
            strip=self.strip,
            tol=self.tol,
            maxiter=self.maxiter,
            mesh_check=self.mesh_check,
            jobs=self.jobs if jobs is None else jobs,
            csv_path=self.output.get('csv'),
            json_path=self.output.get('json'),
            plot_path=self.output.get('plot'),
        )


def mesh_estimate(profile: BoundaryProfile, eps: EpsilonValue, params: StripMeshParams) -> Dict[str, int]:
    """Vertex, dof and triangle counts of a strip mesh without building it."""
    ncols = eps.cells(profile) * params.ny_per_cell
    return {
        'columns': ncols,
        'vertices': (ncols + 1) * (params.nz + 1),
        'dofs': ncols * (params.nz + 1),
        'triangles': 2 * ncols * params.nz,
    }


def cell_estimate(ny: int, nz: int) -> Dict[str, int]:
    return {'vertices': (ny + 1) * (nz + 1), 'dofs': ny * (nz + 1), 'triangles': 2 * ny * nz}
