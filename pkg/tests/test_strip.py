"""
Unit tests for the strip problem.
"""

import math
import unittest

import numpy as np

from oscilla.exceptions import NoConvergence
from oscilla.homogenized import TrigPoly, solve_homogenized
from oscilla.mesh import build_strip_mesh
from oscilla.profile import EpsilonValue, make_profile
from oscilla.strip import StripMeshParams, apriori_check, energy_check, solve_thin


class TestSolveThin(unittest.TestCase):
    """Test cases for solve_thin on g = 1 + cos(y)/2."""

    @classmethod
    def setUpClass(cls):
        cls.profile = make_profile(1.0, [(1, 0.5, 0.0)])
        cls.eps = EpsilonValue(4)
        cls.params = StripMeshParams(16, 4)
        cls.solution = solve_thin(cls.profile, cls.eps, TrigPoly.cos(1), cls.params, tol=1e-12)

    def test_constant_forcing(self):
        """f = 1 gives w = 1 since constants carry no flux."""
        sol = solve_thin(self.profile, self.eps, TrigPoly.create(1.0), self.params, tol=1e-12)
        np.testing.assert_allclose(sol.field.values, 1.0, atol=1e-6)

    def test_energy_identity(self):
        self.assertLess(abs(energy_check(self.solution)), 1e-7)

    def test_apriori_bound(self):
        w_norm, f_norm = apriori_check(self.solution)
        self.assertGreater(w_norm, 0.0)
        self.assertLessEqual(w_norm, f_norm * (1.0 + 1e-9))

    def test_solution_is_even_in_phi(self):
        """Symmetric profile and cos forcing: w(phi) = w(2 pi - phi) at the bottom."""
        mesh = self.solution.mesh
        bottom = mesh.bottom_vertices()
        phi = mesh.vertices[bottom, 0]
        values = self.solution.field.values[bottom]
        order = np.argsort(phi)
        phi, values = phi[order], values[order]
        mirrored = np.interp(2.0 * math.pi - phi, phi, values)
        np.testing.assert_allclose(values, mirrored, atol=1e-7)

    def test_close_to_homogenized(self):
        """The bottom trace stays near w0 = cos(phi)/(1 + q0) for some q0 in (0, 1)."""
        mesh = self.solution.mesh
        bottom = mesh.bottom_vertices()
        phi = mesh.vertices[bottom, 0]
        values = self.solution.field.values[bottom]
        upper = solve_homogenized(1.0, TrigPoly.cos(1))(phi)
        lower = solve_homogenized(0.4, TrigPoly.cos(1))(phi)
        low, high = np.minimum(upper, lower), np.maximum(upper, lower)
        slack = 0.15
        self.assertTrue(np.all(values >= low - slack))
        self.assertTrue(np.all(values <= high + slack))

    def test_system_metadata(self):
        self.assertEqual(self.solution.dofs, self.solution.mesh.num_dofs)
        self.assertLessEqual(self.solution.solver_residual, 1e-12)
        self.assertIs(self.solution.eps, self.eps)

    def test_prebuilt_mesh(self):
        mesh = build_strip_mesh(self.profile, self.eps, 16, 4)
        sol = solve_thin(self.profile, self.eps, TrigPoly.cos(1), mesh=mesh, tol=1e-12)
        np.testing.assert_allclose(sol.field.values, self.solution.field.values, atol=1e-12)

    def test_no_convergence(self):
        with self.assertRaises(NoConvergence):
            solve_thin(self.profile, self.eps, TrigPoly.cos(1), self.params, maxiter=1)
        partial = solve_thin(self.profile, self.eps, TrigPoly.cos(1), self.params, maxiter=1, strict=False)
        self.assertGreater(partial.solver_residual, 1e-12)


class TestSweepSizeSolve(unittest.TestCase):
    """Solves at the mesh sizes of the default sweep."""

    @classmethod
    def setUpClass(cls):
        cls.profile = make_profile(1.0, [(1, 0.5, 0.0)])
        cls.eps = EpsilonValue(16)
        cls.solution = solve_thin(cls.profile, cls.eps, TrigPoly.cos(1), StripMeshParams(32, 16), tol=1e-11)

    def test_true_residual_meets_tolerance(self):
        sol = self.solution
        rhs = sol.system.rhs
        true_residual = np.linalg.norm(sol.system.matrix @ sol.field.reduced() - rhs) / np.linalg.norm(rhs)
        self.assertAlmostEqual(sol.solver_residual, true_residual, delta=1e-13)
        self.assertLessEqual(true_residual, max(1e-11, sol.residual_floor))
        self.assertLess(sol.residual_floor, 1e-8)

    def test_energy_identity(self):
        self.assertLess(abs(energy_check(self.solution)), 1e-7)

    def test_truncated_solve_keeps_energy_identity(self):
        """CG from zero keeps b - Ax orthogonal to x, so early iterates already balance energy and load."""
        partial = solve_thin(self.profile, self.eps, TrigPoly.cos(1), StripMeshParams(32, 16),
                             maxiter=2, strict=False)
        self.assertEqual(partial.field.iterations, 2)
        self.assertGreater(partial.solver_residual, 1e-3)
        self.assertLess(abs(energy_check(partial)), 1e-8)


class TestStripMeshParams(unittest.TestCase):

    def test_refined(self):
        params = StripMeshParams(8, 4, max_triangles=10)
        self.assertEqual(params.refined(), StripMeshParams(16, 8, 10))


if __name__ == '__main__':
    unittest.main()
