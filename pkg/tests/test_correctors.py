"""
Unit tests for corrector truncations, cell evaluation and rescaled norms.
"""

import math
import unittest

import numpy as np

from oscilla.cell import solve_cell
from oscilla.correctors import (FIRST, H1, L2, SECOND, CellLocator, cell_eval, cell_scaling_check,
                                norm_rescaled, plain_norm, trig_sample, truncation)
from oscilla.convergence import fit_rate
from oscilla.exceptions import BoundViolated, ConfigError, MeshMismatch, OutOfDomain
from oscilla.fem import FieldSample, Quadrature, ScalarField
from oscilla.homogenized import TrigPoly, inner, solve_homogenized
from oscilla.mesh import build_cell_mesh, build_strip_mesh
from oscilla.profile import EpsilonValue, make_profile


class TestCellLocator(unittest.TestCase):
    """Test cases for CellLocator and cell_eval."""

    def setUp(self):
        self.profile = make_profile(1.0, [(1, 0.5, 0.0)])
        self.mesh = build_cell_mesh(self.profile, 16, 4)
        self.locator = CellLocator(self.mesh)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(7)
        y = rng.uniform(0.0, self.profile.period, 50)
        z = rng.uniform(0.0, 0.98, 50) * self.profile.eval(y)
        tri, bary = self.locator.locate(y, z)
        for k in range(len(y)):
            self.assertEqual(tri[k], self.locator.brute_force(y[k], z[k]))
        self.assertTrue(np.all(bary >= -1e-12))
        np.testing.assert_allclose(bary.sum(axis=1), 1.0, atol=1e-12)

    def test_periodic_wrap(self):
        y = np.array([0.3, 0.3 + 2.0 * math.pi, 0.3 - 4.0 * math.pi])
        z = np.full(3, 0.2)
        tri, _ = self.locator.locate(y, z)
        self.assertEqual(len(set(tri.tolist())), 1)

    def test_out_of_domain(self):
        with self.assertRaises(OutOfDomain):
            self.locator.locate(np.array([math.pi]), np.array([0.9]))
        with self.assertRaises(OutOfDomain):
            self.locator.locate(np.array([0.0]), np.array([-0.1]))

    def test_needs_cell_mesh(self):
        strip = build_strip_mesh(self.profile, EpsilonValue(2), 4, 2)
        with self.assertRaises(ConfigError):
            CellLocator(strip)

    def test_cell_eval_linear(self):
        """P1 interpolation reproduces z exactly, and the eps scaling is applied."""
        u = ScalarField.interpolate(self.mesh, lambda y, z: z)
        eps = EpsilonValue(4)
        phi = np.array([0.1, 0.7, 1.3])
        theta = np.array([0.05, 0.1, 0.02])
        value, dy, dz = cell_eval(u, phi, theta, eps)
        np.testing.assert_allclose(value, theta / eps.value, atol=1e-12)
        np.testing.assert_allclose(dy, 0.0, atol=1e-12)
        np.testing.assert_allclose(dz, 1.0, atol=1e-12)

    def test_cell_eval_scalar(self):
        u = ScalarField.interpolate(self.mesh, lambda y, z: z)
        value, _, _ = cell_eval(u, 0.5, 0.1, EpsilonValue(2))
        self.assertIsInstance(value, float)
        self.assertAlmostEqual(value, 0.2, places=12)


class TestTruncation(unittest.TestCase):
    """Test cases for truncation and the rescaled norms."""

    @classmethod
    def setUpClass(cls):
        cls.profile = make_profile(1.0, [(1, 0.5, 0.0)])
        cls.cell = solve_cell(cls.profile, 64, 8, tol=1e-12)
        cls.eps = EpsilonValue(4)
        cls.strip = build_strip_mesh(cls.profile, cls.eps, 16, 4)
        cls.w0 = solve_homogenized(cls.cell.q0, TrigPoly.cos(1))

    def test_flat_truncation_is_w0(self):
        flat = make_profile(1.0)
        cell = solve_cell(flat, 16, 4)
        strip = build_strip_mesh(flat, self.eps, 8, 2)
        w0 = solve_homogenized(cell.q0, TrigPoly.cos(1))
        expected = trig_sample(w0, strip)
        for order in (FIRST, SECOND):
            W = truncation(order, w0, cell, self.eps, strip)
            np.testing.assert_allclose(W.sample.value, expected.value, atol=1e-12)
            np.testing.assert_allclose(W.sample.dx, expected.dx, atol=1e-12)
            np.testing.assert_allclose(W.sample.dy, 0.0, atol=1e-12)

    def test_second_order_adds_small_term(self):
        W1 = truncation(FIRST, self.w0, self.cell, self.eps, self.strip)
        W2 = truncation(SECOND, self.w0, self.cell, self.eps, self.strip)
        diff = FieldSample(W2.sample.value - W1.sample.value, W2.sample.dx - W1.sample.dx,
                           W2.sample.dy - W1.sample.dy)
        self.assertGreater(norm_rescaled(diff, L2, self.strip, self.eps), 0.0)
        self.assertLess(norm_rescaled(diff, H1, self.strip, self.eps),
                        norm_rescaled(W1.sample, H1, self.strip, self.eps))
        self.assertEqual(W2.provenance['q0'], self.cell.q0)

    def _compose(self, order, phi, theta, locator):
        e = self.eps.value
        X, _, _ = cell_eval(self.cell.X0, phi, theta, self.eps, locator)
        value = self.w0(phi) - e * X * self.w0.derivative(1)(phi)
        if order == SECOND:
            T, _, _ = cell_eval(self.cell.theta, phi, theta, self.eps, locator)
            value = value + e * e * T * self.w0.derivative(2)(phi)
        return value

    def test_gradients_match_finite_differences(self):
        """Chain-rule gradients agree with central differences of the composed truncation."""
        quad = Quadrature.of(self.strip)
        locator = CellLocator(self.cell.mesh)
        e = self.eps.value
        _, bary = locator.locate(quad.x.reshape(-1) / e, quad.y.reshape(-1) / e)
        # points well inside a cell triangle, so both stencils stay in it
        inside = np.flatnonzero(bary.min(axis=1) > 0.01)[:60]
        self.assertGreater(len(inside), 20)
        phi = quad.x.reshape(-1)[inside]
        theta = quad.y.reshape(-1)[inside]
        h = 1e-6 * e
        for order in (FIRST, SECOND):
            W = truncation(order, self.w0, self.cell, self.eps, self.strip)
            dphi = (self._compose(order, phi + h, theta, locator)
                    - self._compose(order, phi - h, theta, locator)) / (2.0 * h)
            dtheta = (self._compose(order, phi, theta + h, locator)
                      - self._compose(order, phi, theta - h, locator)) / (2.0 * h)
            np.testing.assert_allclose(W.sample.dx.reshape(-1)[inside], dphi, rtol=1e-5, atol=1e-6)
            np.testing.assert_allclose(W.sample.dy.reshape(-1)[inside], dtheta, rtol=1e-5, atol=1e-6)
            np.testing.assert_allclose(W.sample.value.reshape(-1)[inside],
                                       self._compose(order, phi, theta, locator), atol=1e-12)

    def test_second_order_term_scales_with_eps(self):
        """|||W2 - W1|||_H1 = |||eps^2 Theta w0''|||_H1 decays at least linearly in eps."""
        points = []
        for m in (4, 8, 16):
            eps = EpsilonValue(m)
            strip = build_strip_mesh(self.profile, eps, 16, 4)
            W1 = truncation(FIRST, self.w0, self.cell, eps, strip)
            W2 = truncation(SECOND, self.w0, self.cell, eps, strip)
            points.append((eps.value, norm_rescaled(W2.sample - W1.sample, H1, strip, eps)))
        slope = fit_rate(points)[0]
        self.assertGreaterEqual(slope, 0.9)

    def test_bad_order(self):
        with self.assertRaises(ConfigError):
            truncation(3, self.w0, self.cell, self.eps, self.strip)

    def test_second_order_needs_theta(self):
        cell = solve_cell(self.profile, 16, 4, with_theta=False)
        strip = build_strip_mesh(self.profile, self.eps, 4, 1)
        with self.assertRaises(ConfigError):
            truncation(SECOND, self.w0, cell, self.eps, strip)

    def test_mesh_mismatch(self):
        other = build_strip_mesh(make_profile(1.0, [(1, 0.4, 0.0)]), self.eps, 16, 4)
        with self.assertRaises(MeshMismatch):
            truncation(FIRST, self.w0, self.cell, self.eps, other)

    def test_norm_identities(self):
        """On a flat strip the rescaled L2 norm of w0 is its 1D norm weighted by the mean of cos(theta)."""
        flat = make_profile(1.0)
        eps = EpsilonValue(8)
        strip = build_strip_mesh(flat, eps, 32, 4)
        w0 = TrigPoly.cos(1)
        sample = trig_sample(w0, strip)
        l2 = norm_rescaled(sample, L2, strip, eps)
        # integral of cos(theta) over (0, eps) / eps -> 1
        weight = math.sin(eps.value) / eps.value
        self.assertAlmostEqual(l2 ** 2, weight * inner(w0, w0), delta=1e-3 * inner(w0, w0))
        self.assertAlmostEqual(plain_norm(sample, strip) ** 2, eps.value * l2 ** 2, places=12)
        h1 = norm_rescaled(sample, H1, strip, eps)
        self.assertGreater(h1, l2)

    def test_bad_norm_kind(self):
        with self.assertRaises(ConfigError):
            norm_rescaled(trig_sample(self.w0, self.strip), 'H2', self.strip, self.eps)


class TestScalingCheck(unittest.TestCase):
    """Test cases for cell_scaling_check with strip columns aligned to the cell mesh."""

    @classmethod
    def setUpClass(cls):
        cls.profile = make_profile(1.0, [(1, 0.5, 0.0)])
        cls.cell = solve_cell(cls.profile, 16, 4, tol=1e-12)

    def test_aligned_bounds(self):
        eps = EpsilonValue(4)
        strip = build_strip_mesh(self.profile, eps, 16, 4)
        report = cell_scaling_check(self.cell, eps, strip)
        self.assertEqual(set(report), {'X', 'dy_X', 'dz_X', 'Theta', 'dy_Theta', 'dz_Theta'})
        for key, entry in report.items():
            self.assertTrue(entry.passed, key)
            self.assertGreater(entry.ratio, 0.5, key)

    def test_violation(self):
        eps = EpsilonValue(4)
        strip = build_strip_mesh(self.profile, eps, 16, 4)
        with self.assertRaises(BoundViolated):
            cell_scaling_check(self.cell, eps, strip, slack=-0.5)
        report = cell_scaling_check(self.cell, eps, strip, slack=-0.5, raise_on_failure=False)
        self.assertFalse(any(entry.passed for entry in report.values()))


if __name__ == '__main__':
    unittest.main()
