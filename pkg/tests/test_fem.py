"""
Unit tests for the weighted P1 engine.
"""

import inspect
import math
import os
import tempfile
import unittest
from unittest.mock import patch

import numpy as np
from scipy.io import mmread
from scipy.sparse.linalg import cg as scipy_cg

from oscilla import correctors, fem, mesh as mesh_module
from oscilla.convergence import fit_rate
from oscilla.exceptions import IncompatibleRHS, NoConvergence, NonFiniteWeight
from oscilla.fem import (MEAN_ZERO, ScalarField, SparseSystem, WeightedForm, assemble, integrate,
                         l2_h1_errors, solve_spd, write_matrix_market)
from oscilla.mesh import build_box_mesh, build_cell_mesh, mesh_area, mesh_h
from oscilla.profile import make_profile

K = math.pi


def manufactured_form() -> WeightedForm:
    """-Lap u + u = f on the unit square with u = cos(pi x) cos(pi y) and zero flux."""
    return WeightedForm(alpha=1.0, beta=1.0, mu=1.0,
                        rhs_density=lambda x, y: (1.0 + 2.0 * K * K) * np.cos(K * x) * np.cos(K * y))


def exact(x, y):
    return np.cos(K * x) * np.cos(K * y)


def exact_grad(x, y):
    return -K * np.sin(K * x) * np.cos(K * y), -K * np.cos(K * x) * np.sin(K * y)


class TestAssembly(unittest.TestCase):
    """Test cases for assemble."""

    def setUp(self):
        self.profile = make_profile(1.0, [(1, 0.5, 0.0)])
        self.cell = build_cell_mesh(self.profile, 16, 4)

    def test_symmetric(self):
        system = assemble(self.cell, WeightedForm(alpha=lambda x, y: 1.0 + y, beta=2.0, mu=1.0))
        asym = system.matrix - system.matrix.T
        self.assertLess(abs(asym).max() if asym.nnz else 0.0, 1e-12)

    def test_constants_in_kernel(self):
        """On a periodic cell the pure stiffness annihilates constants."""
        system = assemble(self.cell, WeightedForm())
        np.testing.assert_allclose(system.matrix @ np.ones(self.cell.num_dofs), 0.0, atol=1e-12)

    def test_mass_total(self):
        system = assemble(self.cell, WeightedForm(alpha=0.0, beta=0.0, mu=1.0))
        ones = np.ones(self.cell.num_dofs)
        self.assertAlmostEqual(float(ones @ (system.matrix @ ones)), mesh_area(self.cell), places=12)

    def test_non_finite_weight(self):
        with self.assertRaises(NonFiniteWeight):
            assemble(self.cell, WeightedForm(alpha=lambda x, y: np.full_like(x, np.nan)))


class TestIntegrate(unittest.TestCase):
    """Test cases for integrate and ScalarField."""

    def test_polynomial(self):
        mesh = build_box_mesh(1.0, 1.0, 4, 4)
        self.assertAlmostEqual(integrate(mesh, lambda x, y: x * y), 0.25, places=14)
        self.assertAlmostEqual(integrate(mesh, lambda x, y: x * x, weight=2.0), 2.0 / 3.0, places=14)

    def test_linear_field(self):
        mesh = build_box_mesh(1.0, 1.0, 3, 3)
        u = ScalarField.interpolate(mesh, lambda x, y: x + 2.0 * y)
        np.testing.assert_allclose(u.gradients(), np.tile([1.0, 2.0], (mesh.num_triangles, 1)), atol=1e-12)
        self.assertAlmostEqual(u.integral(), 1.5, places=12)
        self.assertAlmostEqual(integrate(mesh, lambda x, y, s: s.dx * s.dy, [u]), 2.0, places=12)


class TestSolve(unittest.TestCase):
    """Test cases for solve_spd."""

    def test_manufactured_convergence(self):
        """P1 errors decay like h^2 in L2 and h in H1."""
        results = []
        for n in (8, 16, 32, 64):
            mesh = build_box_mesh(1.0, 1.0, n, n)
            u = solve_spd(assemble(mesh, manufactured_form()))
            e0, e1 = l2_h1_errors(u, exact, exact_grad)
            results.append((mesh_h(mesh), e0, e1))
        p0 = fit_rate([(h, e0) for h, e0, _ in results])[0]
        p1 = fit_rate([(h, e1) for h, _, e1 in results])[0]
        self.assertAlmostEqual(p0, 2.0, delta=0.15)
        self.assertAlmostEqual(p1, 1.0, delta=0.15)

    def test_mean_zero_gauge(self):
        mesh = build_cell_mesh(make_profile(1.0), 16, 4)
        form = WeightedForm(rhs_density=lambda y, z: np.cos(y))
        u = solve_spd(assemble(mesh, form, gauge=MEAN_ZERO))
        self.assertAlmostEqual(u.integral(), 0.0, places=12)
        self.assertLess(u.residual, 1e-10)

    def test_incompatible_load(self):
        mesh = build_cell_mesh(make_profile(1.0), 8, 2)
        system = SparseSystem(mesh, assemble(mesh, WeightedForm()).matrix, np.ones(mesh.num_dofs), MEAN_ZERO)
        self.assertAlmostEqual(system.compatibility(), 1.0)
        with self.assertRaises(IncompatibleRHS):
            solve_spd(system)

    def test_zero_load(self):
        mesh = build_cell_mesh(make_profile(1.0), 8, 2)
        u = solve_spd(assemble(mesh, WeightedForm(), gauge=MEAN_ZERO))
        np.testing.assert_array_equal(u.values, 0.0)
        self.assertEqual(u.iterations, 0)

    def test_no_convergence(self):
        mesh = build_box_mesh(1.0, 1.0, 16, 16)
        with self.assertRaises(NoConvergence) as ctx:
            solve_spd(assemble(mesh, manufactured_form()), maxiter=1)
        self.assertGreater(ctx.exception.residual, 0.0)

    def test_non_strict_returns_partial(self):
        mesh = build_box_mesh(1.0, 1.0, 16, 16)
        u = solve_spd(assemble(mesh, manufactured_form()), maxiter=1, strict=False)
        self.assertGreater(u.residual, 1e-10)

    def test_restarts_after_early_exit(self):
        """A CG pass that stops short of tol is resumed from its iterate."""
        mesh = build_box_mesh(1.0, 1.0, 16, 16)
        system = assemble(mesh, manufactured_form())
        starts = []

        def early_exit(A, b, x0=None, **kwargs):
            starts.append(np.array(x0, copy=True))
            x, info = scipy_cg(A, b, x0=x0, **kwargs)
            if len(starts) == 1:
                x = x + 1e-6
            return x, info

        with patch('oscilla.fem.cg', side_effect=early_exit):
            u = solve_spd(system, tol=1e-10)
        self.assertGreaterEqual(len(starts), 2)
        self.assertFalse(np.any(starts[0]))
        self.assertTrue(np.any(starts[1]))
        true_residual = np.linalg.norm(system.matrix @ u.reduced() - system.rhs) / np.linalg.norm(system.rhs)
        self.assertLessEqual(true_residual, 1e-10)
        self.assertAlmostEqual(u.residual, true_residual, delta=1e-12)

    def test_tolerance_below_roundoff(self):
        mesh = build_box_mesh(1.0, 1.0, 16, 16)
        with self.assertLogs('oscilla.fem', level='WARNING'):
            u = solve_spd(assemble(mesh, manufactured_form()), tol=1e-17)
        self.assertGreater(u.residual_floor, 1e-17)
        self.assertGreater(u.residual, 1e-17)
        self.assertLessEqual(u.residual, u.residual_floor)

    def test_matrix_market(self):
        mesh = build_box_mesh(1.0, 1.0, 4, 4)
        system = assemble(mesh, manufactured_form())
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'system.mtx')
            write_matrix_market(system, path)
            loaded = mmread(path)
        self.assertEqual(loaded.shape, system.matrix.shape)
        np.testing.assert_allclose(loaded.toarray(), system.matrix.toarray(), atol=1e-12)


class TestDocumentation(unittest.TestCase):
    """Every public function, class, method and property of the numerical core carries a docstring."""

    def _public_members(self, module):
        for name, obj in vars(module).items():
            if name.startswith('_') or getattr(obj, '__module__', None) != module.__name__:
                continue
            if inspect.isfunction(obj):
                yield name, obj
            elif inspect.isclass(obj):
                yield name, obj
                for attr, member in vars(obj).items():
                    if attr.startswith('_'):
                        continue
                    if isinstance(member, property):
                        yield f"{name}.{attr}", member.fget
                    elif isinstance(member, (classmethod, staticmethod)):
                        yield f"{name}.{attr}", member.__func__
                    elif inspect.isfunction(member):
                        yield f"{name}.{attr}", member

    def test_docstrings(self):
        for module in (mesh_module, fem, correctors):
            for name, obj in self._public_members(module):
                self.assertTrue(obj.__doc__ and obj.__doc__.strip(), f"{module.__name__}.{name}")


if __name__ == '__main__':
    unittest.main()
