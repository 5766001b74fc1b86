"""
Regression helpers for comparing simulations with predictions.
"""

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy import stats

from config import FIT_WINDOW_START, DISPERSIVE_FLOOR

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LineFit:
    slope: float
    intercept: float
    stderr: float
    n_points: int
    robust_slope: float = float("nan")

    def interval(self, confidence: float = 0.95) -> Tuple[float, float]:
        """Confidence interval of the slope from the Student t quantile."""
        if self.n_points <= 2:
            return (float("nan"), float("nan"))
        q = stats.t.ppf(0.5 + 0.5 * confidence, self.n_points - 2)
        return (self.slope - q * self.stderr, self.slope + q * self.stderr)


def _window(times: np.ndarray, start_fraction: float) -> np.ndarray:
    t_end = float(np.max(times))
    return times >= start_fraction * t_end


def _line(x: np.ndarray, y: np.ndarray) -> LineFit:
    if len(x) < 3:
        raise ValueError(f"Need at least 3 points for a fit, got: {len(x)}")
    result = stats.linregress(x, y)
    robust = stats.theilslopes(y, x)[0]
    return LineFit(float(result.slope), float(result.intercept), float(result.stderr), len(x), float(robust))


def fit_log_slope(times, amplitudes, start_fraction: float = FIT_WINDOW_START,
                  floor: float = DISPERSIVE_FLOOR) -> LineFit:
    """
    Least-squares line through log|B_b| over [start_fraction * T, T], skipping
    samples below floor * |B_b(0)|.
    """
    times = np.asarray(times, dtype=float)
    modulus = np.abs(np.asarray(amplitudes))
    mask = _window(times, start_fraction) & (modulus >= floor * modulus[0]) & (modulus > 0)
    return _line(times[mask], np.log(modulus[mask]))


def fit_phase_slope(times, amplitudes, start_fraction: float = 0.0) -> LineFit:
    """Line through the unwrapped phase of B_b."""
    times = np.asarray(times, dtype=float)
    phase = np.unwrap(np.angle(np.asarray(amplitudes)))
    mask = _window(times, start_fraction)
    return _line(times[mask], phase[mask])


def fit_power_law(times, values) -> LineFit:
    """log-log line; the slope is the decay exponent."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    mask = (times > 0) & (values > 0)
    return _line(np.log(times[mask]), np.log(values[mask]))


def fit_quadratic(times, values) -> Tuple[float, float]:
    """Least squares values ~ c2 t^2 + c4 t^4; returns (c2, c4)."""
    t = np.asarray(times, dtype=float)
    design = np.column_stack([t ** 2, t ** 4])
    coeffs, *_ = np.linalg.lstsq(design, np.asarray(values, dtype=float), rcond=None)
    return float(coeffs[0]), float(coeffs[1])
