"""
Full two-dimensional problem on the thin strip R^eps.

Finds w with -(1/cos t) d_t(cos t d_t w) - (1/cos^2 t) d_phi^2 w + w = f(phi),
natural Neumann conditions on both boundaries and 2 pi-periodicity in phi.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from oscilla.correctors import L2, norm_rescaled, trig_sample
from oscilla.fem import ScalarField, SparseSystem, WeightedForm, assemble, solve_spd
from oscilla.homogenized import TrigPoly
from oscilla.mesh import TriMesh, build_strip_mesh
from oscilla.profile import BoundaryProfile, EpsilonValue

logger = logging.getLogger(__name__)

MAX_PRINCIPLE_SLACK = 1e-6


@dataclass(frozen=True)
class StripMeshParams:
    """Per-cell resolution of a strip mesh."""

    ny_per_cell: int = 32
    nz: int = 16
    max_triangles: Optional[int] = None

    def refined(self) -> 'StripMeshParams':
        return StripMeshParams(2 * self.ny_per_cell, 2 * self.nz, self.max_triangles)


@dataclass
class StripSolution:
    field: ScalarField
    eps: EpsilonValue
    forcing: TrigPoly
    system: SparseSystem

    @property
    def mesh(self) -> TriMesh:
        return self.field.mesh

    @property
    def solver_residual(self) -> float:
        return self.field.residual

    @property
    def residual_floor(self) -> float:
        return self.field.residual_floor

    @property
    def dofs(self) -> int:
        return self.mesh.num_dofs


def strip_form(f: TrigPoly) -> WeightedForm:
    return WeightedForm(
        alpha=lambda phi, t: 1.0 / np.cos(t),
        beta=lambda phi, t: np.cos(t),
        mu=lambda phi, t: np.cos(t),
        rhs_density=lambda phi, t: f(phi) * np.cos(t),
    )


def solve_thin(profile: BoundaryProfile, eps: EpsilonValue, f: TrigPoly,
               mesh_params: StripMeshParams = StripMeshParams(),
               tol: Optional[float] = None, maxiter: Optional[int] = None,
               strict: bool = True, mesh: Optional[TriMesh] = None) -> StripSolution:
    """Solve the weighted problem on R^eps with P1 elements."""
    mesh = mesh or build_strip_mesh(profile, eps, mesh_params.ny_per_cell, mesh_params.nz,
                                    mesh_params.max_triangles)
    system = assemble(mesh, strip_form(f))
    field_ = solve_spd(system, tol=tol, maxiter=maxiter, strict=strict)
    logger.info(f"Strip solve eps={eps}: {mesh.num_dofs} dofs, {field_.iterations} CG iterations, "
                f"residual {field_.residual:.3e}")
    solution = StripSolution(field_, eps, f, system)
    if f.is_nonnegative():
        scale = float(np.max(np.abs(field_.values))) if field_.values.size else 0.0
        lowest = float(np.min(field_.values))
        if lowest < -MAX_PRINCIPLE_SLACK * scale:
            logger.warning(f"Nonnegative forcing gave min nodal value {lowest:.3e} (eps={eps})")
    return solution


def energy_check(sol: StripSolution) -> float:
    """(a_eps(w, w) - (w, f)_eps) / (w, f)_eps, with 0/0 read as 0."""
    w = sol.field.reduced()
    load = float(w @ sol.system.rhs)
    energy = float(w @ (sol.system.matrix @ w))
    if load == 0.0:
        return 0.0 if energy == 0.0 else float('inf')
    return (energy - load) / load


def apriori_check(sol: StripSolution) -> Tuple[float, float]:
    """Return (|||w|||_L2, |||f|||_L2); the first never exceeds the second."""
    w_norm = norm_rescaled(sol.field.sample(), L2, sol.mesh, sol.eps)
    f_norm = norm_rescaled(trig_sample(sol.forcing, sol.mesh), L2, sol.mesh, sol.eps)
    return w_norm, f_norm
