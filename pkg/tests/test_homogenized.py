"""
Unit tests for the homogenized one-dimensional solver.
"""

import math
import unittest

from hypothesis import given, settings
import hypothesis.strategies as st

from oscilla.exceptions import ConfigError, NonPositiveQ0
from oscilla.homogenized import (TrigPoly, inner, limit_form, limit_inner, residual_check,
                                 solve_homogenized)


class TestTrigPoly(unittest.TestCase):
    """Test cases for TrigPoly."""

    def test_create_merges_modes(self):
        p = TrigPoly.create(1.0, [(2, 1.0, 0.0), (1, 0.5, 0.5), (2, 0.5, -1.0)])
        self.assertEqual(p.modes, ((1, 0.5, 0.5), (2, 1.5, -1.0)))

    def test_eval(self):
        p = TrigPoly.create(0.5, [(1, 1.0, 2.0)])
        self.assertAlmostEqual(p(0.0), 1.5)
        self.assertAlmostEqual(p(math.pi / 2), 2.5)

    def test_derivative(self):
        p = TrigPoly.create(3.0, [(2, 1.0, 0.0)])
        d1 = p.derivative(1)
        self.assertEqual(d1.c0, 0.0)
        self.assertAlmostEqual(d1(math.pi / 4), -2.0)
        self.assertAlmostEqual(p.derivative(2)(0.0), -4.0)
        self.assertAlmostEqual(p.derivative(4)(0.0), 16.0)
        with self.assertRaises(ConfigError):
            p.derivative(5)

    def test_nonnegative(self):
        self.assertTrue(TrigPoly.create(1.0, [(1, 1.0, 0.0)]).is_nonnegative())
        self.assertFalse(TrigPoly.cos(1).is_nonnegative())

    def test_bad_modes(self):
        with self.assertRaises(ConfigError):
            TrigPoly.create(0.0, [(0, 1.0, 0.0)])
        with self.assertRaises(ConfigError):
            TrigPoly.from_dict({'c0': 1.0, 'modes': [{'k': 1.5, 'a': 1.0}]})
        with self.assertRaises(ConfigError):
            TrigPoly.from_dict({'c0': 1.0, 'shift': 2.0})
        with self.assertRaises(ConfigError):
            TrigPoly.from_dict({'c0': 'x'})

    def test_dict_round_trip(self):
        p = TrigPoly.create(0.25, [(1, 1.0, 0.0), (3, 0.0, -0.5)])
        self.assertEqual(TrigPoly.from_dict(p.to_dict()), p)


class TestSolveHomogenized(unittest.TestCase):
    """Test cases for solve_homogenized."""

    def test_cos_forcing(self):
        """-q0 w'' + w = cos(phi) has w = cos(phi) / (1 + q0)."""
        q0 = 0.7
        w0 = solve_homogenized(q0, TrigPoly.cos(1))
        self.assertEqual(len(w0.modes), 1)
        self.assertAlmostEqual(w0(0.0), 1.0 / 1.7, places=14)
        self.assertLess(residual_check(q0, TrigPoly.cos(1), w0), 1e-14)

    def test_constant_forcing(self):
        w0 = solve_homogenized(0.3, TrigPoly.create(2.0))
        self.assertEqual(w0.c0, 2.0)
        self.assertEqual(w0.modes, ())

    def test_non_positive_q0(self):
        for q0 in (0.0, -1.0, float('nan')):
            with self.assertRaises(NonPositiveQ0):
                solve_homogenized(q0, TrigPoly.cos(1))

    @settings(max_examples=40, deadline=None)
    @given(st.floats(min_value=0.05, max_value=2.0),
           st.floats(min_value=-2.0, max_value=2.0),
           st.lists(st.tuples(st.integers(min_value=1, max_value=6),
                              st.floats(min_value=-1.0, max_value=1.0),
                              st.floats(min_value=-1.0, max_value=1.0)), max_size=4))
    def test_residual(self, q0, c0, modes):
        f = TrigPoly.create(c0, modes)
        w0 = solve_homogenized(q0, f)
        self.assertLess(residual_check(q0, f, w0), 1e-12)


class TestLimitForms(unittest.TestCase):
    """Test cases for the limit inner product and bilinear form."""

    def test_inner(self):
        u = TrigPoly.create(1.0, [(1, 1.0, 0.0)])
        v = TrigPoly.create(2.0, [(1, 3.0, 0.0), (2, 0.0, 1.0)])
        self.assertAlmostEqual(inner(u, v), 2.0 * math.pi * 2.0 + math.pi * 3.0)

    def test_limit_inner(self):
        u = TrigPoly.cos(2)
        self.assertAlmostEqual(limit_inner(1.5, u, u), 1.5 * math.pi)

    def test_limit_form_is_weak_equation(self):
        """w0 solves g_hat(q0 w0' v' + w0 v) = g_hat (f, v) for every test mode."""
        q0, g_hat = 0.6, 1.2
        f = TrigPoly.create(0.5, [(1, 1.0, 0.0), (3, 0.0, 2.0)])
        w0 = solve_homogenized(q0, f)
        for v in (TrigPoly.create(1.0), TrigPoly.cos(1), TrigPoly.create(0.0, [(3, 0.0, 1.0)]),
                  TrigPoly.cos(5)):
            self.assertAlmostEqual(limit_form(q0, g_hat, w0, v), limit_inner(g_hat, f, v), places=12)


if __name__ == '__main__':
    unittest.main()
