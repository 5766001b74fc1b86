"""
Tests for scenario files, persisted artifacts, the regression helpers and
the simulation-versus-theory report.
"""

import sys
import os
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import math
import tempfile
import unittest
from pathlib import Path
import numpy as np

from models.pde_solver import TimeSeries
from models.perturbation_coupling import DecayPrediction
from config import FIDELITY_TOLERANCE, SMALL_TIME_WINDOW, SMALL_TIME_TOLERANCE
from models.comparison import compare_runs, slope_tolerance, small_time_fit
from utils.scenario import (Scenario, parse_scenario, serialize_scenario, load_scenario,
                            apply_overrides)
from utils.persistence import (artifact_name, write_time_series, read_time_series,
                               write_json, read_json)
from utils.fitting import fit_log_slope, fit_phase_slope, fit_power_law, fit_quadratic, LineFit
from utils.errors import ScenarioError, MissingArtifacts

QUARTER_SCENARIO = """
# (1/4, 3/4) well, odd channel
potential.kind = two-soliton
potential.rho1 = 0.25
potential.rho2 = 0.75

run.parity = odd
run.epsilons = 0.04, 0.02, 0.01   # three detunings
run.periods = 20
grid.points = 2048
"""


def make_prediction(epsilon: float, gamma: float, lamb: float = 0.01, mbar: float = 0.002,
                    small_time: float = 0.0, dropped=None) -> DecayPrediction:
    fourier_M = np.zeros(5, dtype=complex)
    fourier_M[2] = mbar
    return DecayPrediction(
        parity="odd", epsilon=epsilon, Mbar=mbar, Gamma=gamma, Lambda=lamb,
        beta=1 / 16, period=2 * math.pi, n0=1, k_max=2,
        resonances=[(1, 7 / 16)], contributions={1: gamma} if gamma else {},
        lamb_terms={1: lamb}, fourier_M=fourier_M, small_time=small_time,
        dropped=list(dropped or []),
    )


def make_series(times: np.ndarray, amplitudes: np.ndarray) -> TimeSeries:
    ones = np.ones(len(times))
    return TimeSeries(times, amplitudes, ones, ones)


class TestScenario(unittest.TestCase):
    """Parsing, validation and overrides."""

    def test_parse(self):
        scenario = parse_scenario(QUARTER_SCENARIO)
        self.assertEqual(scenario.epsilons, (0.04, 0.02, 0.01))
        self.assertEqual(scenario.n_periods, 20)
        self.assertEqual(scenario.n_points, 2048)
        self.assertEqual(scenario.domain, (-80.0, 80.0))
        self.assertAlmostEqual(scenario.potential().period, 2 * math.pi, places=12)

    def test_unknown_key_reports_line(self):
        with self.assertRaises(ScenarioError) as context:
            parse_scenario("potential.rho1 = 0.25\n\nrun.speed = 3\n")
        self.assertEqual(context.exception.line, 3)
        self.assertEqual(context.exception.field, "run.speed")
        self.assertEqual(context.exception.exit_code, 2)

    def test_bad_values(self):
        with self.assertRaises(ScenarioError) as context:
            parse_scenario("run.periods = many\n")
        self.assertEqual(context.exception.field, "run.periods")
        with self.assertRaises(ScenarioError):
            parse_scenario("sponge.enabled = maybe\n")
        with self.assertRaises(ScenarioError):
            parse_scenario("run.parity = odd\nrun.parity = even\n")
        with self.assertRaises(ScenarioError):
            parse_scenario("just some text\n")

    def test_cross_field_validation(self):
        with self.assertRaises(ScenarioError) as context:
            parse_scenario("grid.points = 300\n")
        self.assertEqual(context.exception.line, 1)
        with self.assertRaises(ScenarioError):
            parse_scenario("potential.rho1 = 0.9\npotential.rho2 = 0.5\n")
        with self.assertRaises(ScenarioError):
            parse_scenario("run.epsilons = 0.02, -1.5\n")

    def test_round_trip(self):
        quarter = parse_scenario(QUARTER_SCENARIO)
        self.assertEqual(parse_scenario(serialize_scenario(quarter)), quarter)
        discrete = Scenario(potential_kind="discrete", lambdas=(0.5j,), g_vectors=((1 + 0.5j,),),
                            period=2.0, x_min=-30.0, x_max=30.0)
        self.assertEqual(parse_scenario(serialize_scenario(discrete)), discrete)
        self.assertEqual(discrete.potential().M, 1)

    def test_domain_presets(self):
        resonant = Scenario(rho1=1 / math.sqrt(2), rho2=1.0)
        self.assertEqual(resonant.domain, (-40.0, 40.0))
        self.assertEqual(Scenario(potential_kind="zero").domain, (-80.0, 80.0))

    def test_overrides(self):
        scenario = apply_overrides(Scenario(), epsilons=[0.05], parity="even", n_periods=3,
                                   no_sponge=True, drop_zero_resonance=True)
        self.assertEqual(scenario.epsilons, (0.05,))
        self.assertEqual(scenario.parity, "even")
        self.assertEqual(scenario.n_periods, 3)
        self.assertFalse(scenario.sponge_enabled)
        self.assertTrue(scenario.drop_zero_resonance)
        with self.assertRaises(ScenarioError):
            apply_overrides(Scenario(), parity="both")

    def test_load(self):
        self.assertEqual(load_scenario(None), Scenario())
        with self.assertRaises(ScenarioError):
            load_scenario("/nonexistent/scenario.txt")
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "quarter.txt"
            path.write_text(QUARTER_SCENARIO)
            self.assertEqual(load_scenario(str(path)).n_periods, 20)


class TestPersistence(unittest.TestCase):
    """CSV and JSON artifacts."""

    def test_artifact_names(self):
        self.assertEqual(artifact_name("series", "odd", 0.04), "series_odd_eps0.04.csv")
        self.assertEqual(artifact_name("prediction", "even", 0.02, "json"), "prediction_even_eps0.02.json")
        self.assertEqual(artifact_name("comparison", "odd", suffix="json"), "comparison_odd.json")

    def test_series_round_trip_is_exact(self):
        rng = np.random.default_rng(7)
        times = np.cumsum(rng.uniform(0.01, 0.2, 50))
        B = rng.normal(size=50) + 1j * rng.normal(size=50)
        series = TimeSeries(times, B, rng.uniform(size=50), rng.uniform(size=50))
        with tempfile.TemporaryDirectory() as tmp:
            path = write_time_series(Path(tmp) / "nested" / "series_odd_eps0.02.csv", series)
            restored = read_time_series(path)
        np.testing.assert_array_equal(restored.times, times)
        np.testing.assert_array_equal(restored.B_b, B)
        np.testing.assert_array_equal(restored.interior_norm, series.interior_norm)

    def test_json(self):
        prediction = make_prediction(0.02, 1e-4)
        with tempfile.TemporaryDirectory() as tmp:
            path = write_json(Path(tmp) / "prediction.json", {**prediction.to_dict(), "extra": np.float64(0.5)})
            data = read_json(path)
        self.assertEqual(data["extra"], 0.5)
        self.assertEqual(DecayPrediction.from_dict(data).Gamma, 1e-4)

    def test_missing_artifacts(self):
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(MissingArtifacts):
                read_time_series(Path(tmp) / "series_odd_eps0.02.csv")
            with self.assertRaises(MissingArtifacts):
                read_json(Path(tmp) / "prediction_odd_eps0.02.json")


class TestFitting(unittest.TestCase):
    """Regression helpers."""

    def setUp(self):
        self.t = np.linspace(0.0, 100.0, 201)

    def test_log_slope(self):
        fit = fit_log_slope(self.t, np.exp(-0.01 * self.t) * np.exp(0.4j * self.t))
        self.assertAlmostEqual(fit.slope, -0.01, places=12)
        self.assertAlmostEqual(fit.robust_slope, -0.01, places=12)
        self.assertEqual(fit.n_points, int(np.sum(self.t >= 0.2 * self.t[-1])))
        low, high = fit.interval()
        self.assertLessEqual(low, fit.slope)
        self.assertGreaterEqual(high, fit.slope)

    def test_floor_skips_dispersed_samples(self):
        amplitudes = np.where(self.t < 60, np.exp(-0.05 * self.t), 1e-6)
        fit = fit_log_slope(self.t, amplitudes)
        self.assertAlmostEqual(fit.slope, -0.05, places=10)

    def test_phase_slope(self):
        fit = fit_phase_slope(self.t, np.exp(0.3j * self.t))
        self.assertAlmostEqual(fit.slope, 0.3, places=10)

    def test_power_law(self):
        times = np.geomspace(10.0, 100.0, 12)
        self.assertAlmostEqual(fit_power_law(times, 3 * times ** -1.5).slope, -1.5, places=10)

    def test_quadratic(self):
        t = np.linspace(0.01, 0.3, 20)
        c2, c4 = fit_quadratic(t, 2 * t ** 2 + 3 * t ** 4)
        self.assertAlmostEqual(c2, 2.0, places=8)
        self.assertAlmostEqual(c4, 3.0, places=5)

    def test_too_few_points(self):
        with self.assertRaises(ValueError):
            fit_phase_slope([0.0, 1.0], [1.0, 1.0j])
        self.assertTrue(math.isnan(LineFit(1.0, 0.0, 0.1, 2).interval()[0]))


class TestComparison(unittest.TestCase):
    """Reports built from synthetic runs."""

    def setUp(self):
        self.t = np.linspace(0.0, 300.0, 801)

    def decaying(self, gamma: float, phase_rate: float) -> TimeSeries:
        return make_series(self.t, np.exp(-gamma * self.t + 1j * phase_rate * self.t))

    def test_tolerances(self):
        self.assertEqual(slope_tolerance("odd", False), 0.2)
        self.assertEqual(slope_tolerance("even", False), 0.25)
        self.assertEqual(slope_tolerance("even", True), 0.35)

    def test_matching_runs_pass(self):
        predictions = {0.04: make_prediction(0.04, 4e-3), 0.02: make_prediction(0.02, 1e-3)}
        series = {eps: self.decaying(p.Gamma, p.Lambda - p.Mbar) for eps, p in predictions.items()}
        report = compare_runs(predictions, series, "odd")

        self.assertTrue(report.flags["slopes"])
        self.assertTrue(report.flags["scaling"])
        self.assertFalse(report.flags["gated"])
        self.assertEqual(len(report.scaling), 1)
        self.assertAlmostEqual(report.scaling[0]["ratio"], 4.0, places=8)
        entry = report.entries[0]
        self.assertAlmostEqual(entry.phase_slope, entry.predicted_phase_slope, places=8)
        self.assertAlmostEqual(entry.floquet_phase_slope - entry.predicted_phase_slope, 2 / 16, places=14)
        self.assertEqual(report.to_dict()["parity"], "odd")

    def test_wrong_slope_fails(self):
        predictions = {0.02: make_prediction(0.02, 1e-3)}
        report = compare_runs(predictions, {0.02: self.decaying(2e-3, 0.0)}, "odd")
        self.assertFalse(report.entries[0].passed)
        self.assertAlmostEqual(report.entries[0].relative_error, 1.0, places=8)
        self.assertFalse(report.flags["slopes"])

    def test_zero_detuning_uses_fidelity(self):
        predictions = {0.0: make_prediction(0.0, 0.0, lamb=0.0, mbar=0.0)}
        report = compare_runs(predictions, {0.0: self.decaying(0.0, 0.0)}, "odd")
        self.assertIsNone(report.entries[0].relative_error)
        self.assertTrue(report.entries[0].passed)
        self.assertEqual(report.scaling, [])

    def test_renormalized_tolerance(self):
        predictions = {0.02: make_prediction(0.02, 1e-3, dropped=[1])}
        report = compare_runs(predictions, {0.02: self.decaying(1.3e-3, 0.0)}, "even")
        self.assertEqual(report.tolerance, 0.35)
        self.assertTrue(report.flags["renormalized"])
        self.assertTrue(report.entries[0].passed)

    def test_small_time_law(self):
        C = 0.02
        L = 2 * math.pi
        t = np.linspace(0.0, L, 641)
        short = make_series(t, np.sqrt(np.clip(1.0 - C * t ** 2, 0.0, None)))
        self.assertAlmostEqual(small_time_fit(short, L), C, places=10)

        predictions = {0.02: make_prediction(0.02, 1e-3, small_time=C)}
        report = compare_runs(predictions, {0.02: self.decaying(1e-3, 0.0)}, "odd", {0.02: short})
        self.assertLess(report.entries[0].small_time_error, 1e-8)
        self.assertTrue(report.flags["small_time"])

    def test_fidelity_threshold(self):
        predictions = {0.0: make_prediction(0.0, 0.0, lamb=0.0, mbar=0.0)}
        for scale, expected in ((0.5, True), (2.0, False)):
            wobble = 1.0 + scale * FIDELITY_TOLERANCE * np.sin(self.t)
            report = compare_runs(predictions, {0.0: make_series(self.t, wobble.astype(complex))}, "odd")
            self.assertEqual(report.entries[0].passed, expected)

    def test_small_time_window_and_tolerance(self):
        C = 0.02
        L = 2 * math.pi
        t = np.linspace(0.0, L, 641)
        # the law only holds inside the window; beyond it the loss saturates
        loss = np.where(t <= SMALL_TIME_WINDOW * L * (1 + 1e-9), C * t ** 2, 1.0)
        short = make_series(t, np.sqrt(1.0 - np.clip(loss, 0.0, 1.0)))
        self.assertAlmostEqual(small_time_fit(short, L), C, places=8)

        predictions = {0.02: make_prediction(0.02, 1e-3, small_time=C)}
        series = {0.02: self.decaying(1e-3, predictions[0.02].Lambda - predictions[0.02].Mbar)}
        for scale, expected in ((0.5, True), (2.0, False)):
            off = predictions[0.02].small_time * (1 + scale * SMALL_TIME_TOLERANCE)
            short = make_series(t, np.sqrt(np.clip(1.0 - off * t ** 2, 0.0, None)))
            report = compare_runs(predictions, series, "odd", {0.02: short})
            self.assertEqual(report.flags["small_time"], expected)


if __name__ == "__main__":
    unittest.main()
