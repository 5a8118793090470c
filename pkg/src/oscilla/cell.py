"""
Cell problems on the basic cell Y*.

Solves the pure-Neumann, L-periodic, mean-zero problems for X0, X^eps and
Theta, and computes the homogenized coefficient q0.
"""

import math
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from oscilla.exceptions import ConfigError, IncompatibleRHS
from oscilla.fem import (MEAN_ZERO, BoundaryFlux, ScalarField, SparseSystem, WeightedForm, assemble,
                         integrate, solve_spd)
from oscilla.mesh import B1_TOP, TriMesh, build_cell_mesh, mesh_area, mesh_h
from oscilla.profile import BoundaryProfile, EpsilonValue

logger = logging.getLogger(__name__)

THETA_COMPAT_TOL = 1e-8


@dataclass
class CellSolution:
    """Cell functions of one profile on one cell mesh."""

    mesh: TriMesh
    X0: ScalarField
    q0: float
    q0_energy: float
    grad_energy: float
    cell_area: float
    theta: Optional[ScalarField] = None
    x_eps: Dict[int, ScalarField] = field(default_factory=dict)
    residuals: Dict[str, float] = field(default_factory=dict)

    @property
    def profile(self) -> BoundaryProfile:
        return self.mesh.profile

    def summary(self) -> dict:
        ny, nz = self.mesh.ncols, self.mesh.nrows
        return {
            'q0': self.q0,
            'q0_energy': self.q0_energy,
            'grad_energy': self.grad_energy,
            'cell_area': self.cell_area,
            'mesh': {'ny': ny, 'nz': nz, 'h': mesh_h(self.mesh)},
            'residuals': dict(self.residuals),
        }


def _first_normal_component(x, y, nx, ny):
    # d y / d N on the discrete boundary
    return nx


def x0_system(mesh: TriMesh) -> SparseSystem:
    """
    Assemble Laplace X = 0 in Y* with dX/dN = N_y on B1, zero flux on B2.

    The datum -g'/sqrt(1+g'^2) is taken with the normal of the discrete upper
    boundary, so the assembled line integral is -sum over top edges of
    g_h' psi dy and y - X_h is exactly discretely orthogonal to periodic P1.
    """
    form = WeightedForm(alpha=1.0, beta=1.0,
                        neumann_data={B1_TOP: BoundaryFlux(_first_normal_component)})
    return assemble(mesh, form, gauge=MEAN_ZERO)


def solve_X0(profile: BoundaryProfile, mesh: TriMesh, tol: Optional[float] = None) -> ScalarField:
    """Solve the X0 cell problem on mesh (a cell mesh of profile)."""
    system = x0_system(mesh)
    logger.debug(f"X0 load compatibility {system.compatibility():.3e}")
    return solve_spd(system, tol=tol)


def compute_q0(X0: ScalarField, mesh: TriMesh) -> Tuple[float, float, float]:
    """
    Return (q0, q0_energy, grad_energy).

    q0 = |Y*|^-1 integral (1 - dX0/dy); q0_energy = 1 - ||grad X0||^2 / |Y*|.
    """
    area = mesh_area(mesh)
    g = X0.gradients()
    direct = 1.0 - float(np.sum(mesh.signed_areas * g[:, 0])) / area
    energy = float(np.sum(mesh.signed_areas * (g[:, 0] ** 2 + g[:, 1] ** 2)))
    return direct, 1.0 - energy / area, energy


def solve_Xeps(profile: BoundaryProfile, eps: EpsilonValue, mesh: TriMesh,
               tol: Optional[float] = None) -> ScalarField:
    """
    Weighted cell problem with alpha = 1/cos(eps z), beta = cos(eps z) and
    Neumann datum N_y / cos(eps z) on B1.
    """
    e = eps.value
    if e * profile.g1 >= math.pi / 2.0:
        raise ConfigError(f"eps * g1 = {e * profile.g1:.4g} must stay below pi/2")
    form = WeightedForm(
        alpha=lambda y, z: 1.0 / np.cos(e * z),
        beta=lambda y, z: np.cos(e * z),
        neumann_data={B1_TOP: BoundaryFlux(lambda y, z, n1, n2: n1 / np.cos(e * z))},
    )
    system = assemble(mesh, form, gauge=MEAN_ZERO)
    return solve_spd(system, tol=tol)


def theta_compatibility(X0: ScalarField, q0: float, mesh: TriMesh) -> float:
    """Integral of (1 - q0 - dX0/dy) over the cell."""
    g = X0.gradients()
    return float(np.sum(mesh.signed_areas * (1.0 - q0 - g[:, 0])))


def solve_Theta(profile: BoundaryProfile, X0: ScalarField, q0: float, mesh: TriMesh,
                tol: Optional[float] = None) -> ScalarField:
    """
    Solve integral grad Theta . grad psi = integral X0 dpsi/dy + (1 - q0 - dX0/dy) psi.

    Raises:
        IncompatibleRHS: if the volume source does not integrate to zero, i.e.
            (X0, q0) do not come from the same mesh.
    """
    area = mesh_area(mesh)
    residual = theta_compatibility(X0, q0, mesh)
    if abs(residual) > THETA_COMPAT_TOL * area:
        raise IncompatibleRHS(abs(residual) / area, THETA_COMPAT_TOL, what="Theta source")
    s = X0.sample()
    source = 1.0 - q0 - s.dx
    flux = np.stack([s.value, np.zeros_like(s.value)], axis=-1)
    form = WeightedForm(alpha=1.0, beta=1.0, rhs_density=source, rhs_flux=flux)
    system = assemble(mesh, form, gauge=MEAN_ZERO)
    return solve_spd(system, tol=tol)


def h1_norm(field_: ScalarField) -> float:
    """Unweighted H1 norm on the field's mesh."""
    return math.sqrt(integrate(field_.mesh, lambda x, y, s: s.value ** 2 + s.dx ** 2 + s.dy ** 2, [field_]))


def solve_cell(profile: BoundaryProfile, ny: int, nz: int, with_theta: bool = True,
               eps_values: Sequence[EpsilonValue] = (), tol: Optional[float] = None,
               mesh: Optional[TriMesh] = None) -> CellSolution:
    """Solve every requested cell problem on one cell mesh."""
    mesh = mesh or build_cell_mesh(profile, ny, nz)
    X0 = solve_X0(profile, mesh, tol)
    q0, q0_energy, grad_energy = compute_q0(X0, mesh)
    area = mesh_area(mesh)
    logger.info(f"Cell {mesh.ncols}x{mesh.nrows}: q0={q0:.12g} (energy {q0_energy:.12g})")
    solution = CellSolution(mesh, X0, q0, q0_energy, grad_energy, area,
                            residuals={'X0': X0.residual})
    if with_theta:
        solution.residuals['theta_compat'] = abs(theta_compatibility(X0, q0, mesh)) / area
        solution.theta = solve_Theta(profile, X0, q0, mesh, tol)
        solution.residuals['theta'] = solution.theta.residual
    for eps in eps_values:
        solution.x_eps[eps.m] = solve_Xeps(profile, eps, mesh, tol)
    return solution


def richardson_q0(profile: BoundaryProfile, levels: Sequence[Tuple[int, int]],
                  tol: Optional[float] = None) -> Tuple[float, List[float], float]:
    """
    Extrapolate q0 from nested cell meshes (each level doubles ny and nz).

    Returns (extrapolated q0, per-level q0, observed order). The order comes
    from the last three levels; when their differences do not contract the
    nominal order 2 is used.
    """
    if len(levels) < 3:
        raise ConfigError("Richardson extrapolation needs at least 3 levels")
    values = []
    for ny, nz in levels:
        X0 = solve_X0(profile, build_cell_mesh(profile, ny, nz), tol)
        values.append(compute_q0(X0, X0.mesh)[0])
    c, m, f = values[-3:]
    order = 2.0
    if (m - f) != 0.0 and (c - m) / (m - f) > 1.0:
        order = math.log2((c - m) / (m - f))
    extrapolated = f + (f - m) / (2.0 ** order - 1.0)
    logger.info(f"Richardson q0 levels {values}, order {order:.3f}, extrapolated {extrapolated:.12g}")
    return extrapolated, values, order


def _recovered_gradient(field_: ScalarField) -> Tuple[ScalarField, ScalarField]:
    """Area-weighted nodal average of the piecewise-constant gradient."""
    mesh = field_.mesh
    g = field_.gradients()
    weights = np.repeat(mesh.signed_areas, 3)
    tri = mesh.triangles.reshape(-1)
    dof = mesh.dof_map[tri]
    total = np.bincount(dof, weights=weights, minlength=mesh.num_dofs)
    parts = []
    for d in range(2):
        acc = np.bincount(dof, weights=weights * np.repeat(g[:, d], 3), minlength=mesh.num_dofs)
        parts.append(ScalarField.from_reduced(mesh, acc / total))
    return parts[0], parts[1]


def second_derivative_norms(field_: ScalarField) -> Dict[str, Any]:
    """
    Approximate L2 norms of the second derivatives by differentiating a
    recovered gradient. The values are estimates, not discretely exact.
    """
    gy, gz = _recovered_gradient(field_)
    Gy, Gz = gy.gradients(), gz.gradients()
    areas = field_.mesh.signed_areas
    return {
        'yy': math.sqrt(float(np.sum(areas * Gy[:, 0] ** 2))),
        'yz': math.sqrt(float(np.sum(areas * Gy[:, 1] ** 2))),
        'zz': math.sqrt(float(np.sum(areas * Gz[:, 1] ** 2))),
        'approximate': True,
    }
