"""
Corrector truncations and rescaled weighted norms on the thin strip.

Cell functions are extended periodically and composed with the fast
variables (y, z) = (phi/eps mod L, theta/eps).
"""

import math
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

import numpy as np

from oscilla.cell import CellSolution
from oscilla.exceptions import BoundViolated, ConfigError, MeshMismatch, OutOfDomain
from oscilla.fem import FieldSample, Quadrature, ScalarField
from oscilla.homogenized import TrigPoly
from oscilla.mesh import CELL, TriMesh
from oscilla.profile import EpsilonValue

logger = logging.getLogger(__name__)

FIRST = 1
SECOND = 2

L2 = 'L2'
H1 = 'H1'

DOMAIN_TOL = 1e-10


class CellLocator:
    """
    Point location on a structured cell mesh by lattice index arithmetic.

    The column comes from the y coordinate, the row from the height fraction
    along the column; the containing triangle is the better of the two
    triangles of that lattice cell.
    """

    def __init__(self, mesh: TriMesh):
        if mesh.kind != CELL:
            raise ConfigError(f"point location needs a cell mesh, got {mesh.kind}")
        self.mesh = mesh
        self.period = mesh.period
        self.width = self.period / mesh.ncols

    def locate(self, y: np.ndarray, z: np.ndarray, check: bool = True) -> Tuple[np.ndarray, np.ndarray]:
        """Return (triangle index, barycentric coordinates) for each point."""
        mesh = self.mesh
        y = np.mod(np.asarray(y, dtype=float), self.period)
        z = np.asarray(z, dtype=float)
        if check:
            top = mesh.profile.eval(y)
            outside = (z > top * (1.0 + DOMAIN_TOL)) | (z < -DOMAIN_TOL * top)
            if np.any(outside):
                k = int(np.argmax(outside))
                raise OutOfDomain(f"point (y={y[k]:.6g}, z={z[k]:.6g}) lies outside Y*")

        cols = mesh.columns
        i = np.clip(np.floor(y / self.width).astype(np.int64), 0, mesh.ncols - 1)
        i = np.where(y < cols[i], np.maximum(i - 1, 0), i)
        i = np.where(y > cols[i + 1], np.minimum(i + 1, mesh.ncols - 1), i)
        t = (y - cols[i]) / (cols[i + 1] - cols[i])
        height = mesh.heights[i] * (1.0 - t) + mesh.heights[i + 1] * t
        j = np.clip(np.floor(z / height * mesh.nrows).astype(np.int64), 0, mesh.nrows - 1)

        base = 2 * (j * mesh.ncols + i)
        p = np.column_stack([y, z])
        best_tri = base
        best_bary = None
        best_min = None
        for offset in (0, 1):
            tri = base + offset
            p0 = mesh.vertices[mesh.triangles[tri, 0]]
            bary = np.einsum('nad,nd->na', mesh.basis_gradients[tri], p - p0)
            bary[:, 0] += 1.0
            lowest = bary.min(axis=1)
            if best_bary is None:
                best_bary, best_min = bary, lowest
            else:
                better = lowest > best_min
                best_tri = np.where(better, tri, best_tri)
                best_bary = np.where(better[:, None], bary, best_bary)
        return best_tri, best_bary

    def brute_force(self, y: float, z: float) -> int:
        """Scan every triangle; used to check locate()."""
        mesh = self.mesh
        y = float(np.mod(y, self.period))
        p0 = mesh.vertices[mesh.triangles[:, 0]]
        bary = np.einsum('nad,nd->na', mesh.basis_gradients, np.array([y, z]) - p0)
        bary[:, 0] += 1.0
        return int(np.argmax(bary.min(axis=1)))


def cell_eval(cell_field: ScalarField, phi, theta, eps: EpsilonValue,
              locator: Optional[CellLocator] = None):
    """
    Evaluate a periodically extended cell function at strip points.

    Args:
        cell_field: P1 field on a cell mesh.
        phi: Strip abscissae (scalar or array).
        theta: Strip heights, same shape as phi.
        eps: Scale of the strip.
        locator: Optional prebuilt CellLocator for cell_field.mesh.

    Returns:
        (value, d/dy, d/dz) at (y, z) = (phi/eps mod L, theta/eps), shaped like
        phi; floats for scalar input.

    Raises:
        OutOfDomain: if a point lies above the cell.
    """
    locator = locator or CellLocator(cell_field.mesh)
    phi = np.asarray(phi, dtype=float)
    shape = phi.shape
    e = eps.value
    y = phi.reshape(-1) / e
    z = np.asarray(theta, dtype=float).reshape(-1) / e
    tri, bary = locator.locate(y, z)
    local = cell_field.values[cell_field.mesh.triangles[tri]]
    value = np.sum(local * bary, axis=1)
    grad = cell_field.gradients()[tri]
    out = (value.reshape(shape), grad[:, 0].reshape(shape), grad[:, 1].reshape(shape))
    if not shape:
        return tuple(float(v) for v in out)
    return out


@dataclass
class CorrectorField:
    """W1 or W2 at the quadrature points of a strip mesh."""

    order: int
    sample: FieldSample
    eps: EpsilonValue
    provenance: Dict[str, Any] = field(default_factory=dict)


def trig_sample(p: TrigPoly, strip_mesh: TriMesh) -> FieldSample:
    """
    Sample a function of phi alone at strip quadrature points.

    Args:
        p: Trigonometric polynomial in phi.
        strip_mesh: Mesh whose quadrature is used.

    Returns:
        FieldSample with d/dphi = p' and d/dtheta = 0.
    """
    quad = Quadrature.of(strip_mesh)
    return FieldSample(p(quad.x), p.derivative(1)(quad.x), np.zeros_like(quad.x))


def _check_same_profile(cell: CellSolution, strip_mesh: TriMesh) -> None:
    if strip_mesh.profile != cell.profile:
        raise MeshMismatch("cell solution and strip mesh come from different profiles")


def truncation(order: int, w0: TrigPoly, cell: CellSolution, eps: EpsilonValue,
               strip_mesh: TriMesh) -> CorrectorField:
    """
    W1 = w0 - eps X w0',  W2 = W1 + eps^2 Theta w0''  with chain-rule gradients.

    Args:
        order: FIRST or SECOND.
        w0: Homogenized solution.
        cell: Cell solution of the strip's profile (with Theta for SECOND).
        eps: Scale of the strip.
        strip_mesh: Strip mesh whose quadrature points carry the result.

    Returns:
        CorrectorField with values and gradients at the quadrature points.

    Raises:
        ConfigError: bad order, or Theta missing for SECOND.
        MeshMismatch: cell and strip come from different profiles.
    """
    if order not in (FIRST, SECOND):
        raise ConfigError(f"corrector order must be 1 or 2, got {order}")
    _check_same_profile(cell, strip_mesh)
    if order == SECOND and cell.theta is None:
        raise ConfigError("second-order truncation needs Theta")
    e = eps.value
    quad = Quadrature.of(strip_mesh)
    phi, theta = quad.x, quad.y
    d0, d1, d2 = w0(phi), w0.derivative(1)(phi), w0.derivative(2)(phi)

    locator = CellLocator(cell.mesh)
    X, Xy, Xz = cell_eval(cell.X0, phi, theta, eps, locator)
    value = d0 - e * X * d1
    dphi = d1 - Xy * d1 - e * X * d2
    dtheta = -Xz * d1
    if order == SECOND:
        d3 = w0.derivative(3)(phi)
        T, Ty, Tz = cell_eval(cell.theta, phi, theta, eps, locator)
        value = value + e * e * T * d2
        dphi = dphi + e * Ty * d2 + e * e * T * d3
        dtheta = dtheta + e * Tz * d2
    return CorrectorField(order, FieldSample(value, dphi, dtheta), eps,
                          {'eps': e, 'q0': cell.q0, 'cell_mesh': (cell.mesh.ncols, cell.mesh.nrows)})


def norm_rescaled(sample: FieldSample, kind: str, strip_mesh: TriMesh, eps: EpsilonValue) -> float:
    """
    |||u|||^2_L2 = eps^-1 int u^2 cos(theta),
    |||u|||^2_H1 = eps^-1 int ((d_theta u)^2 + (d_phi u)^2 / cos^2(theta) + u^2) cos(theta).
    """
    quad = Quadrature.of(strip_mesh)
    c = np.cos(quad.y)
    density = sample.value ** 2
    if kind == H1:
        density = density + sample.dy ** 2 + sample.dx ** 2 / (c * c)
    elif kind != L2:
        raise ConfigError(f"norm kind must be L2 or H1, got {kind}")
    return math.sqrt(float(np.sum(quad.weights * density * c)) / eps.value)


def plain_norm(sample: FieldSample, strip_mesh: TriMesh) -> float:
    """||u||_L2(R^eps, cos theta) without the eps^-1 rescaling."""
    quad = Quadrature.of(strip_mesh)
    return math.sqrt(float(np.sum(quad.weights * sample.value ** 2 * np.cos(quad.y))))


@dataclass
class ScalingEntry:
    """One quantity of the scaling check: strip integral, bound, their ratio."""

    lhs: float
    bound: float
    ratio: float
    passed: bool


def cell_scaling_check(cell: CellSolution, eps: EpsilonValue, strip_mesh: TriMesh,
                       slack: float = 1e-2, raise_on_failure: bool = True) -> Dict[str, ScalingEntry]:
    """
    Compare int over R^eps of Q(phi/eps, theta/eps)^2 cos(theta) with
    (2 pi eps / L) ||Q||^2_L2(Y*) for Q in X, d_y X, d_z X, Theta, d_y Theta, d_z Theta.

    Args:
        cell: Cell solution; Theta entries are skipped when it is absent.
        eps: Scale of the strip.
        strip_mesh: Strip mesh of the same profile.
        slack: Relative quadrature slack on every bound.
        raise_on_failure: Raise BoundViolated instead of only marking entries.

    Returns:
        ScalingEntry per quantity name.

    Raises:
        BoundViolated: listing every quantity above its bound (with slack).
    """
    _check_same_profile(cell, strip_mesh)
    quad = Quadrature.of(strip_mesh)
    factor = 2.0 * math.pi * eps.value / cell.profile.period
    locator = CellLocator(cell.mesh)
    cell_areas = cell.mesh.signed_areas

    fields = [('X', cell.X0)]
    if cell.theta is not None:
        fields.append(('Theta', cell.theta))

    report: Dict[str, ScalingEntry] = {}
    for name, f in fields:
        value, gy, gz = cell_eval(f, quad.x, quad.y, eps, locator)
        s = f.sample()
        grads = f.gradients()
        cell_norms = {
            name: float(np.sum(Quadrature.of(cell.mesh).weights * s.value ** 2)),
            f'dy_{name}': float(np.sum(cell_areas * grads[:, 0] ** 2)),
            f'dz_{name}': float(np.sum(cell_areas * grads[:, 1] ** 2)),
        }
        strip_values = {name: value, f'dy_{name}': gy, f'dz_{name}': gz}
        for key, q in strip_values.items():
            lhs = float(np.sum(quad.weights * q ** 2 * np.cos(quad.y)))
            bound = factor * cell_norms[key]
            ratio = lhs / bound if bound > 0.0 else 0.0
            report[key] = ScalingEntry(lhs, bound, ratio, lhs <= bound * (1.0 + slack))
            logger.debug(f"Scaling {key}: lhs={lhs:.6e} bound={bound:.6e} ratio={ratio:.4f}")

    failed = [k for k, v in report.items() if not v.passed]
    if failed and raise_on_failure:
        raise BoundViolated(failed)
    return report
