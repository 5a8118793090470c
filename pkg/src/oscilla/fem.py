"""
Weighted P1 finite elements on structured triangulations.

The engine assembles

    integral of  alpha d_x u d_x v + beta d_y u d_y v + mu u v

with a load  integral of  f v + F . grad v  plus Neumann fluxes on tagged
edges, merges periodic vertices, and solves the resulting symmetric system
with Jacobi-preconditioned conjugate gradients.
"""

import math
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence, Union

import numpy as np
from scipy import sparse as sp
from scipy.io import mmwrite
from scipy.sparse.linalg import LinearOperator, cg

from oscilla import config
from oscilla.exceptions import IncompatibleRHS, NoConvergence, NonFiniteWeight
from oscilla.mesh import TriMesh

logger = logging.getLogger(__name__)

# 3-point degree-2 Gauss rule: barycentric coordinates of the points, equal weights 1/3
GAUSS_BARY = np.array([
    [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0],
    [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
    [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
])
GAUSS_WEIGHT = 1.0 / 3.0

# 2-point Gauss rule on [0, 1]
EDGE_POINTS = np.array([0.5 - 0.5 / math.sqrt(3.0), 0.5 + 0.5 / math.sqrt(3.0)])
EDGE_WEIGHTS = np.array([0.5, 0.5])

MEAN_ZERO = 'mean_zero'

# CG restarts allowed after the recursive residual claims convergence
MAX_RESTARTS = 20

# Residuals below ROUNDOFF_FACTOR * machine eps * (|| |A| |x| || + ||b||) / ||b|| are not resolvable in float64
ROUNDOFF_FACTOR = 8.0

Coefficient = Union[None, float, Callable[[np.ndarray, np.ndarray], np.ndarray], np.ndarray]


@dataclass(frozen=True)
class BoundaryFlux:
    """
    Neumann datum on one boundary tag.

    func(x, y, nx, ny) returns the flux per unit arc length at edge quadrature
    points, where (nx, ny) is the outward unit normal of the discrete edge.
    """

    func: Callable[[np.ndarray, np.ndarray, np.ndarray, np.ndarray], np.ndarray]


@dataclass
class WeightedForm:
    """Integrands of a weighted bilinear form and its load."""

    alpha: Coefficient = 1.0
    beta: Coefficient = 1.0
    mu: Coefficient = None
    rhs_density: Coefficient = None
    rhs_flux: Optional[np.ndarray] = None
    neumann_data: Dict[str, BoundaryFlux] = field(default_factory=dict)


@dataclass
class Quadrature:
    """Physical quadrature points of a mesh, all arrays of shape (T, 3)."""

    x: np.ndarray
    y: np.ndarray
    weights: np.ndarray

    @classmethod
    def of(cls, mesh: TriMesh) -> 'Quadrature':
        """
        Map the reference Gauss rule onto every triangle of a mesh.

        Args:
            mesh: Triangulation to integrate over.

        Returns:
            Quadrature with points and area-scaled weights, one row per triangle.
        """
        p = mesh.vertices[mesh.triangles]
        pts = np.einsum('qa,tad->tqd', GAUSS_BARY, p)
        w = np.repeat((GAUSS_WEIGHT * mesh.signed_areas)[:, None], 3, axis=1)
        return cls(pts[:, :, 0], pts[:, :, 1], w)


@dataclass
class FieldSample:
    """Values and first derivatives of a function at quadrature points."""

    value: np.ndarray
    dx: np.ndarray
    dy: np.ndarray

    def __add__(self, other: 'FieldSample') -> 'FieldSample':
        return FieldSample(self.value + other.value, self.dx + other.dx, self.dy + other.dy)

    def __sub__(self, other: 'FieldSample') -> 'FieldSample':
        return FieldSample(self.value - other.value, self.dx - other.dx, self.dy - other.dy)

    def __mul__(self, c: float) -> 'FieldSample':
        return FieldSample(c * self.value, c * self.dx, c * self.dy)

    __rmul__ = __mul__


@dataclass(eq=False)
class ScalarField:
    """P1 nodal values on a mesh; periodic slaves mirror their masters."""

    mesh: TriMesh
    values: np.ndarray
    residual: float = 0.0
    iterations: int = 0
    residual_floor: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.mesh.is_periodic:
            self.values[self.mesh.periodic_slaves] = self.values[self.mesh.periodic_masters]

    @classmethod
    def from_reduced(cls, mesh: TriMesh, reduced: np.ndarray, **kwargs) -> 'ScalarField':
        """
        Expand a vector of reduced degrees of freedom to nodal values.

        Args:
            mesh: Mesh whose dof_map the vector follows.
            reduced: One value per reduced degree of freedom.
            **kwargs: Solver metadata (residual, iterations, residual_floor).

        Returns:
            ScalarField with slaves copied from their masters.
        """
        return cls(mesh, np.asarray(reduced)[mesh.dof_map], **kwargs)

    @classmethod
    def interpolate(cls, mesh: TriMesh, func: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> 'ScalarField':
        """Nodal interpolant of func(x, y)."""
        values = np.broadcast_to(func(mesh.vertices[:, 0], mesh.vertices[:, 1]), (mesh.num_vertices,))
        return cls(mesh, np.array(values, dtype=float))

    @classmethod
    def zeros(cls, mesh: TriMesh) -> 'ScalarField':
        """All-zero field on mesh."""
        return cls(mesh, np.zeros(mesh.num_vertices))

    def reduced(self) -> np.ndarray:
        """Values indexed by reduced degree of freedom."""
        out = np.zeros(self.mesh.num_dofs)
        out[self.mesh.dof_map] = self.values
        return out

    def gradients(self) -> np.ndarray:
        """Piecewise-constant gradient, shape (T, 2)."""
        local = self.values[self.mesh.triangles]
        return np.einsum('ta,tad->td', local, self.mesh.basis_gradients)

    def sample(self, quad: Optional[Quadrature] = None) -> FieldSample:
        """
        Evaluate the field at the quadrature points of its mesh.

        Args:
            quad: Ignored; the assembly rule of the mesh is always used.

        Returns:
            FieldSample of values and piecewise-constant gradients, shape (T, 3).
        """
        local = self.values[self.mesh.triangles]
        vals = local @ GAUSS_BARY.T
        g = self.gradients()
        return FieldSample(vals, np.repeat(g[:, :1], 3, axis=1), np.repeat(g[:, 1:], 3, axis=1))

    def integral(self) -> float:
        """Exact integral of the P1 field."""
        return float(vertex_weights(self.mesh) @ self.values)


@dataclass
class SparseSystem:
    """An assembled system over reduced (periodic-master) degrees of freedom."""

    mesh: TriMesh
    matrix: sp.csr_matrix
    rhs: np.ndarray
    gauge: Optional[str] = None

    @property
    def dof_map(self) -> np.ndarray:
        """Vertex -> reduced degree of freedom of the underlying mesh."""
        return self.mesh.dof_map

    def compatibility(self) -> float:
        """Relative mean |sum b| / sum |b| of the load (0 for a zero load)."""
        total = float(np.sum(np.abs(self.rhs)))
        if total == 0.0:
            return 0.0
        return abs(float(np.sum(self.rhs))) / total


def vertex_weights(mesh: TriMesh) -> np.ndarray:
    """Integral of each nodal basis function over the mesh."""
    return np.bincount(mesh.triangles.reshape(-1),
                       weights=np.repeat(mesh.signed_areas / 3.0, 3),
                       minlength=mesh.num_vertices)


def _evaluate(coef: Coefficient, x: np.ndarray, y: np.ndarray, name: str) -> np.ndarray:
    if coef is None:
        return np.zeros_like(x)
    if callable(coef):
        out = np.broadcast_to(np.asarray(coef(x, y), dtype=float), x.shape)
    else:
        out = np.broadcast_to(np.asarray(coef, dtype=float), x.shape)
    if not np.all(np.isfinite(out)):
        raise NonFiniteWeight(f"{name} is not finite at some quadrature point")
    return out


def _boundary_load(mesh: TriMesh, neumann: Dict[str, BoundaryFlux]) -> np.ndarray:
    load = np.zeros(mesh.num_vertices)
    for tag, flux in neumann.items():
        edges = mesh.edges_with_tag(tag)
        if not len(edges):
            continue
        p0 = mesh.vertices[edges[:, 0]]
        p1 = mesh.vertices[edges[:, 1]]
        d = p1 - p0
        length = np.hypot(d[:, 0], d[:, 1])
        nx, ny = d[:, 1] / length, -d[:, 0] / length
        for t, w in zip(EDGE_POINTS, EDGE_WEIGHTS):
            px = p0[:, 0] + t * d[:, 0]
            py = p0[:, 1] + t * d[:, 1]
            value = np.asarray(flux.func(px, py, nx, ny), dtype=float) * np.ones_like(px)
            if not np.all(np.isfinite(value)):
                raise NonFiniteWeight(f"Neumann datum on {tag} is not finite")
            contrib = w * length * value
            load += np.bincount(edges[:, 0], weights=(1.0 - t) * contrib, minlength=mesh.num_vertices)
            load += np.bincount(edges[:, 1], weights=t * contrib, minlength=mesh.num_vertices)
    return load


def assemble(mesh: TriMesh, form: WeightedForm, gauge: Optional[str] = None) -> SparseSystem:
    """
    Assemble the weighted form on mesh with degree-2 Gauss quadrature.

    Weights are evaluated at the physical quadrature points. Contributions of
    periodic slave vertices are merged into their masters.
    """
    quad = Quadrature.of(mesh)
    alpha = _evaluate(form.alpha, quad.x, quad.y, 'alpha')
    beta = _evaluate(form.beta, quad.x, quad.y, 'beta')
    mu = _evaluate(form.mu, quad.x, quad.y, 'mu')
    f = _evaluate(form.rhs_density, quad.x, quad.y, 'rhs_density')

    G = mesh.basis_gradients
    wa = np.sum(quad.weights * alpha, axis=1)
    wb = np.sum(quad.weights * beta, axis=1)
    local = (wa[:, None, None] * G[:, :, None, 0] * G[:, None, :, 0]
             + wb[:, None, None] * G[:, :, None, 1] * G[:, None, :, 1])
    if form.mu is not None:
        mass = np.einsum('tq,qa,qb->tab', quad.weights * mu, GAUSS_BARY, GAUSS_BARY)
        local = local + 0.5 * (mass + mass.transpose(0, 2, 1))

    load = np.einsum('tq,qa->ta', quad.weights * f, GAUSS_BARY)
    if form.rhs_flux is not None:
        F = np.asarray(form.rhs_flux, dtype=float)
        if not np.all(np.isfinite(F)):
            raise NonFiniteWeight("rhs_flux is not finite")
        load = load + np.einsum('tq,tqd,tad->ta', quad.weights, F, G)

    dofs = mesh.dof_map[mesh.triangles]
    rows = np.repeat(dofs, 3, axis=1).reshape(-1)
    cols = np.tile(dofs, (1, 3)).reshape(-1)
    n = mesh.num_dofs
    matrix = sp.coo_matrix((local.reshape(-1), (rows, cols)), shape=(n, n)).tocsr()

    full_load = np.bincount(mesh.triangles.reshape(-1), weights=load.reshape(-1),
                            minlength=mesh.num_vertices)
    if form.neumann_data:
        full_load = full_load + _boundary_load(mesh, form.neumann_data)
    rhs = np.bincount(mesh.dof_map, weights=full_load, minlength=n)
    logger.debug(f"Assembled {n} dofs, {matrix.nnz} nonzeros")
    return SparseSystem(mesh, matrix, rhs, gauge)


def residual_floor(abs_A: sp.spmatrix, x: np.ndarray, b_norm: float) -> float:
    """
    Smallest relative residual ||Ax - b|| / ||b|| that float64 can resolve at x.

    Rounding in the product Ax alone is of order eps * |A| |x| per row, so a
    load much smaller than |A| |x| (fine stiffness-dominated meshes) bounds the
    attainable relative residual from below.

    Args:
        abs_A: Entrywise absolute value of the system matrix.
        x: Current iterate.
        b_norm: 2-norm of the load.

    Returns:
        The floor as a relative residual.
    """
    scale = float(np.linalg.norm(abs_A @ np.abs(x))) + b_norm
    return ROUNDOFF_FACTOR * float(np.finfo(float).eps) * scale / b_norm


def solve_spd(system: SparseSystem, tol: Optional[float] = None, maxiter: Optional[int] = None,
              compat_tol: Optional[float] = None, strict: bool = True) -> ScalarField:
    """
    Solve the system with Jacobi-preconditioned conjugate gradients.

    Under the mean-zero gauge the load is first checked and projected to
    compatibility, and the solution is shifted to zero integral. CG is
    restarted from its last iterate while the true relative residual
    ||Ax - b|| / ||b|| is above tol and iterations remain. A residual that
    stops improving below the roundoff floor of the system is accepted even
    when tol is smaller; the floor is kept on the returned field.

    Args:
        system: Assembled system.
        tol: Relative residual target (default config.CG_TOL).
        maxiter: Iteration budget shared by all restarts.
        compat_tol: Compatibility tolerance of a mean-zero load.
        strict: Raise instead of returning an unconverged field.

    Returns:
        ScalarField carrying the residual and iteration count.

    Raises:
        IncompatibleRHS: if a mean-zero load has relative mean above compat_tol.
        NoConvergence: if the relative residual stays above max(tol, floor) (strict mode).
    """
    tol = config.CG_TOL if tol is None else tol
    compat_tol = config.COMPAT_TOL if compat_tol is None else compat_tol
    A = system.matrix
    b = system.rhs.astype(float)
    n = A.shape[0]
    if maxiter is None:
        maxiter = max(100, int(20 * math.sqrt(n)))

    if system.gauge == MEAN_ZERO:
        ratio = system.compatibility()
        if ratio > compat_tol:
            raise IncompatibleRHS(ratio, compat_tol)
        b = b - np.mean(b)

    b_norm = float(np.linalg.norm(b))
    iterations = 0
    if b_norm == 0.0:
        x = np.zeros(n)
        residual = 0.0
        floor = 0.0
    else:
        diag = A.diagonal()
        diag = np.where(diag > 0.0, diag, 1.0)
        M = LinearOperator((n, n), matvec=lambda r: r / diag, dtype=float)

        def count(_):
            nonlocal iterations
            iterations += 1

        # restart from x until the true residual b - Ax is below tol
        abs_A = abs(A)
        x = np.zeros(n)
        restarts = 0
        previous = math.inf
        while True:
            before = iterations
            x, info = cg(A, b, x0=x, rtol=0.5 * tol, atol=0.0, maxiter=maxiter - iterations,
                         M=M, callback=count)
            residual = float(np.linalg.norm(A @ x - b)) / b_norm
            floor = residual_floor(abs_A, x, b_norm)
            if residual <= tol or iterations >= maxiter or iterations == before or restarts >= MAX_RESTARTS:
                break
            # stagnation at roundoff level
            if residual <= floor and residual > 0.5 * previous:
                break
            previous = residual
            restarts += 1
            logger.debug(f"CG restart {restarts} after {iterations} iterations, residual {residual:.3e}")
        logger.debug(f"CG finished: {iterations} iterations, {restarts} restart(s), residual {residual:.3e}")
        if tol < residual <= floor:
            logger.warning(f"Tolerance {tol:.1e} is below the roundoff floor {floor:.1e} of this system; "
                           f"residual {residual:.3e} accepted")
        if strict and residual > max(tol, floor):
            raise NoConvergence(iterations, residual)

    solution = ScalarField.from_reduced(system.mesh, x, residual=residual, iterations=iterations,
                                        residual_floor=floor)
    if system.gauge == MEAN_ZERO:
        area = float(np.sum(system.mesh.signed_areas))
        solution.values = solution.values - solution.integral() / area
    return solution


def integrate(mesh: TriMesh, integrand: Callable[..., np.ndarray],
              fields: Sequence[Union[ScalarField, FieldSample]] = (),
              weight: Coefficient = None) -> float:
    """
    Integrate integrand(x, y, *samples) over mesh with the assembly quadrature.

    Each entry of fields is passed to the integrand as a FieldSample at the
    quadrature points. Summation runs in ascending triangle order.
    """
    quad = Quadrature.of(mesh)
    samples = [f.sample(quad) if isinstance(f, ScalarField) else f for f in fields]
    values = np.broadcast_to(np.asarray(integrand(quad.x, quad.y, *samples), dtype=float), quad.x.shape)
    w = quad.weights if weight is None else quad.weights * _evaluate(weight, quad.x, quad.y, 'weight')
    per_triangle = np.sum(values * w, axis=1)
    return float(np.cumsum(per_triangle)[-1]) if len(per_triangle) else 0.0


def l2_h1_errors(field_: ScalarField, exact: Callable, exact_grad: Callable) -> tuple:
    """L2 error and H1 seminorm error of a discrete field against an exact solution."""
    def l2(x, y, s):
        return (s.value - exact(x, y)) ** 2

    def h1(x, y, s):
        gx, gy = exact_grad(x, y)
        return (s.dx - gx) ** 2 + (s.dy - gy) ** 2

    mesh = field_.mesh
    return math.sqrt(integrate(mesh, l2, [field_])), math.sqrt(integrate(mesh, h1, [field_]))


def write_matrix_market(system: SparseSystem, path: str) -> None:
    """Dump the system matrix in Matrix Market coordinate format."""
    mmwrite(path, system.matrix.tocoo(), comment='oscilla reduced system', symmetry='general')
    logger.info(f"Matrix written to {path}")
