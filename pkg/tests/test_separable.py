"""
Tests for the separable potential constructor and the two-soliton closed forms.
"""

import sys
import os
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import math
import unittest
import numpy as np

from models.separable_potential import (DiscreteData, TwoSolitonParams, validate_discrete_data,
                                        solve_dressing, dressing_residual, eval_a, eval_potential,
                                        two_soliton_fields, two_soliton_potential, two_soliton_a,
                                        check_commensurate, potential_function, period_of)
from utils.errors import NotImaginarySpectrum


class TestDiscreteData(unittest.TestCase):
    """Validation of the spectral data."""

    def test_valid_data(self):
        self.assertTrue(validate_discrete_data(np.array([0.5j, 1j]), np.ones((2, 1))))
        data = DiscreteData(np.array([0.25j, 0.75j]), np.array([1.0, 1.0]))
        self.assertEqual(data.M, 2)
        self.assertEqual(data.N, 1)
        self.assertAlmostEqual(data.rho_max, 0.75)
        self.assertTrue(data.is_imaginary())

    def test_invalid_data(self):
        with self.assertRaises(ValueError):
            DiscreteData(np.array([-0.5j]), np.ones((1, 1)))       # lower half-plane
        with self.assertRaises(ValueError):
            DiscreteData(np.array([0.5j, 0.5j]), np.ones((2, 1)))  # repeated point
        with self.assertRaises(ValueError):
            DiscreteData(np.array([0.5j, 1j]), np.ones((3, 1)))    # wrong number of vectors
        with self.assertRaises(ValueError):
            DiscreteData(np.array([0.5j]), np.zeros((1, 1)))       # zero generator

    def test_two_soliton_params(self):
        with self.assertRaises(ValueError):
            TwoSolitonParams(0.75, 0.25)
        with self.assertRaises(ValueError):
            TwoSolitonParams(0.0, 0.5)


class TestTwoSolitonFamily(unittest.TestCase):
    """Closed forms, periods and resonances of the reference parameter sets."""

    def setUp(self):
        self.quarter = TwoSolitonParams(0.25, 0.75)
        self.resonant = TwoSolitonParams(1 / math.sqrt(2), 1.0)

    def test_periods(self):
        self.assertAlmostEqual(self.quarter.period, 2 * math.pi, places=12)
        self.assertAlmostEqual(self.resonant.period, 2 * math.pi, places=12)
        self.assertAlmostEqual(self.quarter.omega, 1.0, places=12)

    def test_well_depth(self):
        self.assertAlmostEqual(float(two_soliton_potential(self.quarter, 0.0, 0.0)), -4.0, places=12)
        half = self.quarter.period / 2
        self.assertAlmostEqual(float(two_soliton_potential(self.quarter, 0.0, half)), -1.0, places=12)

    def test_b1_at_origin(self):
        b1, _, _ = two_soliton_fields(self.quarter, np.array([0.0]), 0.0)
        self.assertAlmostEqual(abs(b1[0] - 1j), 0.0, places=12)

    def test_resonances(self):
        for n in range(-3, 6):
            self.assertAlmostEqual(float(self.quarter.resonance(n)), n / 2 - 1 / 16, places=12)
        self.assertAlmostEqual(float(self.resonant.resonance(1)), 0.0, places=12)

    def test_floquet_multiplier(self):
        self.assertAlmostEqual(abs(self.resonant.floquet_multiplier - 1.0), 0.0, places=12)
        expected = np.exp(2j * math.pi / 8)
        self.assertAlmostEqual(abs(self.quarter.floquet_multiplier - expected), 0.0, places=12)

    def test_potential_is_even_and_periodic(self):
        x = np.linspace(0.0, 12.0, 61)
        for t in (0.0, 0.7, 2.9):
            v = two_soliton_potential(self.quarter, x, t)
            np.testing.assert_allclose(two_soliton_potential(self.quarter, -x, t), v, atol=1e-14)
            np.testing.assert_allclose(two_soliton_potential(self.quarter, x, t + self.quarter.period), v,
                                       atol=1e-12)

    def test_no_overflow_far_out(self):
        x = np.array([-2000.0, -500.0, 500.0, 2000.0])
        values = two_soliton_potential(self.quarter, x, 1.0)
        self.assertTrue(np.all(np.isfinite(values)))
        self.assertLess(np.max(np.abs(values)), 1e-100)

    def test_well_mass_is_conserved(self):
        x = np.linspace(-60.0, 60.0, 12001)
        dx = x[1] - x[0]
        masses = []
        for t in (0.0, self.quarter.period / 2, 1.3):
            v = np.abs(two_soliton_potential(self.quarter, x, t))
            masses.append(dx * (np.sum(v) - 0.5 * (v[0] + v[-1])))
        for mass in masses:
            self.assertLess(abs(mass - masses[0]), 1e-8 * masses[0])
        self.assertAlmostEqual(masses[0], 4 * self.quarter.s, places=8)

    def test_far_field_is_negligible(self):
        for t in (0.0, 2.0):
            values = two_soliton_potential(self.quarter, np.array([-160.0, 160.0]), t)
            self.assertLess(float(np.max(np.abs(values))), 1e-12)

    def test_nls_residual(self):
        """psi = 2i b1 solves i psi_t + psi_xx / 2 + |psi|^2 psi = 0."""
        h = 1e-3
        x = np.linspace(-6.0, 6.0, 25)
        for t in (0.0, 1.1, 4.0):
            def psi(xx, tt):
                return 2j * two_soliton_fields(self.quarter, xx, tt)[0]

            center = psi(x, t)
            psi_t = (psi(x, t + h) - psi(x, t - h)) / (2 * h)
            psi_xx = (psi(x + h, t) - 2 * center + psi(x - h, t)) / h ** 2
            residual = 1j * psi_t + 0.5 * psi_xx + np.abs(center) ** 2 * center
            self.assertLess(np.max(np.abs(residual)), 1e-4)


class TestGeneralConstructor(unittest.TestCase):
    """The linear-system constructor against closed forms."""

    def setUp(self):
        self.params = TwoSolitonParams(0.25, 0.75, theta1=0.3, theta2=-1.1)
        self.data = self.params.to_discrete_data()
        self.rng = np.random.default_rng(12345)

    def test_closed_form_matches_linear_system(self):
        x = self.rng.uniform(-15.0, 15.0, 100)
        t = self.rng.uniform(0.0, self.params.period, 100)
        for xi, ti in zip(x, t):
            general = eval_potential(self.data, xi, ti)
            closed = float(two_soliton_potential(self.params, xi, ti))
            self.assertLessEqual(abs(general - closed), 1e-10 * max(1.0, abs(closed)))

    def test_generating_function_matches(self):
        x = np.linspace(-8.0, 8.0, 17)
        lam = np.array([-1.3, 0.0, 0.4, 2.2])
        general = eval_a(self.data, x, 0.8, lam)
        closed = two_soliton_a(self.params, x, 0.8, lam)
        np.testing.assert_allclose(general, closed, rtol=1e-10, atol=1e-10)

    def test_bound_generators_are_floquet(self):
        x = np.linspace(-5.0, 5.0, 21)
        L = self.params.period
        points = np.array([-1j * self.params.rho1, -1j * self.params.rho2])
        multiplier = self.params.floquet_multiplier
        for t in (0.0, 0.9):
            np.testing.assert_allclose(eval_a(self.data, x, t + L, points),
                                       multiplier * eval_a(self.data, x, t, points),
                                       rtol=1e-9, atol=1e-12)
            np.testing.assert_allclose(two_soliton_a(self.params, x, t + L, points),
                                       multiplier * two_soliton_a(self.params, x, t, points),
                                       rtol=1e-9, atol=1e-12)

    def test_reflection_symmetry(self):
        x = np.linspace(0.5, 6.0, 12)
        lam = np.array([0.3, 1.1, 2.0])
        np.testing.assert_allclose(eval_a(self.data, -x, 0.7, lam), eval_a(self.data, x, 0.7, -lam),
                                   rtol=1e-10, atol=1e-12)
        for xi in (0.4, 2.5, 7.0):
            right = solve_dressing(self.data, xi, 1.9).a_coeffs
            left = solve_dressing(self.data, -xi, 1.9).a_coeffs
            self.assertLess(abs(left[0] - right[0]), 1e-12)
            self.assertLess(abs(left[1] + right[1]), 1e-12)

    def test_asymptotic_polynomials(self):
        lam = np.array([-1.2, 0.0, 0.7, 2.5])
        r1, r2 = self.params.rho1, self.params.rho2
        right = (lam - 1j * r1) * (lam - 1j * r2)
        left = (lam + 1j * r1) * (lam + 1j * r2)
        for t in (0.0, 2.2):
            for x, expected in ((30.0, right), (-30.0, left)):
                stripped = eval_a(self.data, x, t, lam) * np.exp(2j * (lam * x + lam ** 2 * t))
                np.testing.assert_allclose(stripped, expected, atol=1e-9)
            a0, a1 = solve_dressing(self.data, 30.0, t).a_coeffs
            self.assertLess(abs(a0 + r1 * r2), 1e-9)
            self.assertLess(abs(a1 + 1j * self.params.s), 1e-9)

    def test_dressing_residual(self):
        for x, t in [(0.0, 0.0), (3.5, 1.2), (-20.0, 5.0)]:
            solution = solve_dressing(self.data, x, t)
            self.assertLess(dressing_residual(self.data, solution), 1e-12)
            self.assertLess(solution.condition, 1e12)

    def test_single_soliton(self):
        """M = 1 gives -4 rho^2 sech^2(2 rho x - delta)."""
        rho = 0.6
        data = DiscreteData(np.array([1j * rho]), np.array([[0.8 + 0.3j]]))
        x = np.linspace(-10.0, 10.0, 201)
        values = eval_potential(data, x, 0.0)
        np.testing.assert_allclose(eval_potential(data, x, 2.7), values, atol=1e-12)

        delta = math.acosh(max(1.0, math.sqrt(4 * rho ** 2 / -eval_potential(data, 0.0, 0.0))))
        errors = [np.max(np.abs(values + 4 * rho ** 2 / np.cosh(2 * rho * x - sign * delta) ** 2))
                  for sign in (1.0, -1.0)]
        self.assertLess(min(errors), 1e-8)

    def test_potential_function_dispatch(self):
        zero = potential_function(None)
        self.assertEqual(float(np.max(np.abs(zero(np.linspace(-1, 1, 5), 0.3)))), 0.0)
        closed = potential_function(self.params)
        self.assertAlmostEqual(float(closed(np.array([0.5]), 0.2)[0]),
                               float(two_soliton_potential(self.params, 0.5, 0.2)), places=14)


class TestCommensurability(unittest.TestCase):
    """Period detection from the spectral data."""

    def test_two_soliton_period(self):
        report = check_commensurate(TwoSolitonParams(0.25, 0.75).to_discrete_data())
        self.assertEqual(report.kind, "periodic")
        self.assertAlmostEqual(report.period, 2 * math.pi, places=10)
        self.assertEqual(report.integers, (0, 1))

    def test_stationary(self):
        report = check_commensurate(DiscreteData(np.array([0.5j]), np.ones((1, 1))))
        self.assertEqual(report.kind, "stationary")
        self.assertIsNone(report.period)

    def test_quasiperiodic(self):
        lambdas = 1j * np.sqrt(np.array([1.0, 2.0, 1.0 + math.pi]))
        report = check_commensurate(DiscreteData(lambdas, np.ones((3, 1))))
        self.assertEqual(report.kind, "quasiperiodic")
        self.assertIsNone(report.period)

    def test_period_of(self):
        self.assertAlmostEqual(period_of(TwoSolitonParams(0.25, 0.75)), 2 * math.pi, places=10)
        self.assertIsNone(period_of(None))

    def test_not_imaginary(self):
        with self.assertRaises(NotImaginarySpectrum):
            check_commensurate(DiscreteData(np.array([0.1 + 1j, 2j]), np.ones((2, 1))))


if __name__ == "__main__":
    unittest.main()
