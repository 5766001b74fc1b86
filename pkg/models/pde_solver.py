"""
Split-step Fourier integration of the detuned equation

    i f_t = -(1 / (2 (1 + eps))) f_xx + (1 + eps) V0(x, t) f

with a Strang composition (kinetic half-step, potential step over the window,
kinetic half-step), a Gaussian sponge layer at both ends, adaptive substeps and
step-doubling error control. The bound-state projection is recorded at a fixed
number of samples per period.
"""

import numpy as np
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple
from scipy.special import roots_legendre

from config import (DEFAULT_PERIODS, RECORD_EVERY, DT_MAX_FRACTION, DT_MIN_FRACTION,
                    POTENTIAL_CHANGE_PER_STEP, STEP_TOLERANCE, MAX_STEP_RETRIES,
                    TIME_QUADRATURE_NODES, SPONGE_DAMPING, SPONGE_WIDTH_FRACTION,
                    SPONGE_MARGIN, SPONGE_ACTIVE, POTENTIAL_SUPPORT)
from models.separable_potential import (TwoSolitonParams, DiscreteData, PotentialSource,
                                        potential_function, period_of, eval_bound_generator)
from models.spectral_basis import SpatialGrid, WaveField, psi_b_parity
from utils.errors import StepRejected
from utils.quadrature import l2_norm

# Configure logging
logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

Potential = Callable[[np.ndarray, float], np.ndarray]
FRAMES = ("perturbation", "laboratory")


@dataclass(frozen=True)
class SpongeParams:
    """Gaussian absorbing bumps at both ends of the domain."""
    damping: float = SPONGE_DAMPING
    width: Optional[float] = None       # default (x_R - x_L) * SPONGE_WIDTH_FRACTION
    margin: float = SPONGE_MARGIN
    enabled: bool = True


def sponge_profile(grid: SpatialGrid, sponge: SpongeParams) -> np.ndarray:
    """w(x) = exp(-((x - x_R)/w)^2) + exp(-((x - x_L)/w)^2), bumps moved inward by the margin."""
    if not sponge.enabled or sponge.damping == 0:
        return np.zeros(grid.n_points)
    width = sponge.width or (grid.x_max - grid.x_min) * SPONGE_WIDTH_FRACTION
    x = grid.x
    right = grid.x_max - sponge.margin
    left = grid.x_min + sponge.margin
    return np.exp(-((x - right) / width) ** 2) + np.exp(-((x - left) / width) ** 2)


@dataclass(frozen=True, eq=False)
class SimulationConfig:
    """Everything one solver run needs."""
    grid: SpatialGrid
    source: PotentialSource = None
    epsilon: float = 0.0
    n_periods: int = DEFAULT_PERIODS
    initial_condition: str = "odd-bound"   # even-bound | odd-bound | custom
    initial_field: Optional[np.ndarray] = None
    dt_max: Optional[float] = None
    dt_min: Optional[float] = None
    sponge: SpongeParams = field(default_factory=SpongeParams)
    record_every: int = RECORD_EVERY
    step_tolerance: float = STEP_TOLERANCE
    frame: str = "perturbation"
    period: Optional[float] = None          # for stationary or zero potentials

    @property
    def time_period(self) -> float:
        return self.period or period_of(self.source) or 2.0 * math.pi

    @property
    def step_bounds(self) -> Tuple[float, float]:
        L = self.time_period
        dt_max = self.dt_max if self.dt_max is not None else DT_MAX_FRACTION * L
        dt_min = self.dt_min if self.dt_min is not None else DT_MIN_FRACTION * L
        return dt_min, dt_max

    @property
    def dilation(self) -> float:
        """sqrt(1 + eps) in the perturbation frame, 1 in the laboratory frame."""
        return math.sqrt(1.0 + self.epsilon) if self.frame == "perturbation" else 1.0


def validate_config(config: SimulationConfig) -> bool:
    """Step bounds, frame, initial condition and sponge placement."""
    if not config.epsilon > -1:
        raise ValueError(f"Detuning must exceed -1, got: {config.epsilon}")
    if config.frame not in FRAMES:
        raise ValueError(f"Unknown frame: {config.frame}")
    if config.n_periods <= 0:
        raise ValueError(f"n_periods must be positive, got: {config.n_periods}")
    if config.record_every <= 0:
        raise ValueError(f"record_every must be positive, got: {config.record_every}")

    dt_min, dt_max = config.step_bounds
    if not 0 < dt_min < dt_max <= DT_MAX_FRACTION * config.time_period * (1 + 1e-12):
        raise ValueError(f"Need 0 < dt_min < dt_max <= L/64, got: ({dt_min}, {dt_max})")

    if config.initial_condition not in ("even-bound", "odd-bound", "custom"):
        raise ValueError(f"Unknown initial condition: {config.initial_condition}")
    if config.initial_condition == "custom":
        if config.initial_field is None or np.shape(config.initial_field) != (config.grid.n_points,):
            raise ValueError("Custom initial condition needs a field sampled on the grid")
    elif config.source is None:
        raise ValueError("Bound-state initial data needs a potential")

    # sponge must sit where the potential has vanished
    weights = sponge_profile(config.grid, config.sponge)
    active = weights > SPONGE_ACTIVE
    if np.any(active):
        V = potential_function(config.source)
        for t in np.linspace(0.0, config.time_period, 8, endpoint=False):
            peak = float(np.max(np.abs(V(config.grid.x[active], t))))
            if peak >= POTENTIAL_SUPPORT:
                raise ValueError(f"Sponge overlaps the potential: |V0| = {peak:.2e} inside the sponge at t={t:.3f}")

    return True


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """Recorded projections and norms of one run."""
    times: np.ndarray
    B_b: np.ndarray
    field_norm: np.ndarray
    interior_norm: np.ndarray
    schedule: np.ndarray = None          # (n_steps, 2): start time and dt of every step
    final_field: Optional[WaveField] = None

    def __post_init__(self):
        n = len(self.times)
        if not (len(self.B_b) == len(self.field_norm) == len(self.interior_norm) == n):
            raise ValueError("TimeSeries columns have inconsistent lengths")
        if n > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("TimeSeries times must be strictly increasing")


# ---------------------------------------------------------------------------
# Propagator pieces
# ---------------------------------------------------------------------------

class SplitStepPropagator:
    """Strang step for one configuration, with cached kinetic multipliers."""

    def __init__(self, config: SimulationConfig, potential: Optional[Potential] = None):
        self.config = config
        self.grid = config.grid
        base = potential or potential_function(config.source)
        self.scale = 1.0 + config.epsilon
        self.potential = lambda x, t: self.scale * base(x, t)
        self.k_squared = self.grid.wavenumbers ** 2
        self.absorption = config.sponge.damping * sponge_profile(self.grid, config.sponge)
        self._nodes, self._weights = roots_legendre(TIME_QUADRATURE_NODES)
        self._kinetic = {}

    def kinetic(self, dt: float) -> np.ndarray:
        """Half-step multiplier e^{-i k^2 dt / (4 (1 + eps))}."""
        key = float(dt)
        if key not in self._kinetic:
            if len(self._kinetic) > 64:
                self._kinetic.clear()
            self._kinetic[key] = np.exp(-1j * self.k_squared * dt / (4.0 * self.scale))
        return self._kinetic[key]

    def potential_phase(self, t: float, dt: float) -> np.ndarray:
        """int_t^{t+dt} (1 + eps) V0(x, s) ds by Gauss-Legendre in time."""
        phase = np.zeros(self.grid.n_points)
        for node, weight in zip(self._nodes, self._weights):
            s = t + 0.5 * dt * (1.0 + node)
            phase += 0.5 * dt * weight * self.potential(self.grid.x, s)
        return phase

    def unitary_step(self, samples: np.ndarray, t: float, dt: float) -> np.ndarray:
        half = self.kinetic(dt)
        f = np.fft.ifft(half * np.fft.fft(samples))
        f = np.exp(-1j * self.potential_phase(t, dt)) * f
        return np.fft.ifft(half * np.fft.fft(f))

    def step(self, samples: np.ndarray, t: float, dt: float) -> np.ndarray:
        f = self.unitary_step(samples, t, dt)
        if np.any(self.absorption):
            f = np.exp(-self.absorption * dt) * f
        return f

    def inverse_step(self, samples: np.ndarray, t: float, dt: float) -> np.ndarray:
        """Undo the unitary step over [t, t+dt] by conjugation."""
        return np.conj(self.unitary_step(np.conj(samples), t, dt))

    def doubling_error(self, samples: np.ndarray, t: float, dt: float) -> float:
        """Relative L2 difference between one step and two half steps."""
        full = self.step(samples, t, dt)
        halves = self.step(self.step(samples, t, 0.5 * dt), t + 0.5 * dt, 0.5 * dt)
        norm = np.linalg.norm(samples)
        return float(np.linalg.norm(full - halves) / norm) if norm > 0 else 0.0


def step(field: WaveField, t: float, dt: float, config: SimulationConfig,
         potential: Optional[Potential] = None) -> WaveField:
    """
    One Strang step from t to t+dt followed by sponge attenuation.

    Raises:
        StepRejected: when the step-doubling estimate exceeds the configured tolerance
    """
    propagator = SplitStepPropagator(config, potential)
    error = propagator.doubling_error(field.samples, t, dt)
    if error > config.step_tolerance:
        raise StepRejected(f"Step-doubling error {error:.2e} exceeds {config.step_tolerance:.1e} "
                           f"at t={t:.4f}, dt={dt:.3e}")
    return WaveField(propagator.step(field.samples, t, dt), field.grid, t + dt)


def potential_rate(t: float, config: SimulationConfig, potential: Optional[Potential] = None) -> float:
    """max_x |d/dt (1 + eps) V0(x, t)| by a centered difference."""
    V = potential or potential_function(config.source)
    h = 1e-4 * config.time_period
    x = config.grid.x
    return (1.0 + config.epsilon) * float(np.max(np.abs(V(x, t + h) - V(x, t - h)))) / (2.0 * h)


def adapt_dt(t: float, config: SimulationConfig, potential: Optional[Potential] = None) -> float:
    """
    dt = POTENTIAL_CHANGE_PER_STEP / max_x |d/dt (1 + eps) V0(x, t)|, clamped to [dt_min, dt_max].
    """
    dt_min, dt_max = config.step_bounds
    rate = potential_rate(t, config, potential)
    if rate <= 0:
        return dt_max
    return float(min(dt_max, max(dt_min, POTENTIAL_CHANGE_PER_STEP / rate)))


def evolve(field: WaveField, t_end: float, dt: float, config: SimulationConfig,
           potential: Optional[Potential] = None) -> WaveField:
    """Fixed-step evolution from field.time to t_end (last step shortened to land exactly)."""
    propagator = SplitStepPropagator(config, potential)
    n_steps = max(1, int(math.ceil((t_end - field.time) / dt - 1e-9)))
    h = (t_end - field.time) / n_steps
    samples = field.samples
    for j in range(n_steps):
        samples = propagator.step(samples, field.time + j * h, h)
    return WaveField(samples, field.grid, t_end)


# ---------------------------------------------------------------------------
# Bound states in the simulation frame
# ---------------------------------------------------------------------------

def bound_state_sampler(config: SimulationConfig) -> Optional[Callable[[float], np.ndarray]]:
    """
    The projection function phi(x, t) on the grid.

    In the perturbation frame phi = (1+eps)^{1/4} Psi_b(sqrt(1+eps) x, t), so <phi, f>
    is the bound amplitude of the undilated V0 + W problem.
    """
    source = config.source
    x = config.grid.x
    scale = config.dilation

    if isinstance(source, TwoSolitonParams):
        parity = "odd" if config.initial_condition == "odd-bound" else "even"
        if config.initial_condition == "custom":
            parity = _dominant_parity(config)
        return lambda t: math.sqrt(scale) * psi_b_parity(source, parity, scale * x, t)

    if isinstance(source, DiscreteData):
        if source.M != 1:
            raise ValueError("Bound-state projection for general data is limited to M=1")
        dx = config.grid.dx

        def sampler(t):
            values = eval_bound_generator(source, 0, scale * x, t)
            return values / math.sqrt(dx * scale * np.sum(np.abs(values) ** 2))
        return lambda t: math.sqrt(scale) * sampler(t)

    return None


def _dominant_parity(config: SimulationConfig) -> str:
    f = np.asarray(config.initial_field, dtype=complex)
    reflected = np.roll(f[::-1], 1)
    even = np.linalg.norm(f + reflected)
    odd = np.linalg.norm(f - reflected)
    return "even" if even >= odd else "odd"


def initial_field(config: SimulationConfig) -> WaveField:
    if config.initial_condition == "custom":
        return WaveField(np.asarray(config.initial_field, dtype=complex), config.grid, 0.0)
    return WaveField(bound_state_sampler(config)(0.0), config.grid, 0.0)


# ---------------------------------------------------------------------------
# Runs
# ---------------------------------------------------------------------------

def advance_interval(propagator: SplitStepPropagator, samples: np.ndarray, t: float, interval: float,
                     dt: float, config: SimulationConfig,
                     potential: Optional[Potential] = None) -> Tuple[np.ndarray, List[Tuple[float, float]]]:
    """
    Equal substeps across one record interval.

    Step doubling is checked on the first substep and on the substep where
    |dV0/dt| peaks; a rejection restarts the interval with twice as many substeps.

    Returns:
        (samples at t + interval, list of (start, dt) per substep)

    Raises:
        StepRejected: when the error stays above tolerance at dt_min or after MAX_STEP_RETRIES halvings
    """
    dt_min, _ = config.step_bounds
    n = max(1, int(math.ceil(interval / dt - 1e-9)))
    for _ in range(MAX_STEP_RETRIES + 1):
        h = interval / n
        starts = t + h * np.arange(n)
        rates = [potential_rate(s + 0.5 * h, config, potential) for s in starts]
        checked = {0, int(np.argmax(rates))}

        current, steps, error, where = samples, [], 0.0, t
        for j, start in enumerate(starts):
            if j in checked:
                error = propagator.doubling_error(current, start, h)
                if error > config.step_tolerance:
                    where = start
                    break
            current = propagator.step(current, start, h)
            steps.append((start, h))
        else:
            return current, steps

        if h / 2 < dt_min:
            break
        logger.debug(f"Step-doubling error {error:.2e} at t={where:.4f}, dt={h:.3e}; halving")
        n *= 2
    raise StepRejected(
        f"Step-doubling error {error:.2e} above {config.step_tolerance:.1e} at t={where:.4f} "
        f"after retries (dt={h:.3e})")


def run(config: SimulationConfig, potential: Optional[Potential] = None,
        progress: Optional[Callable[[float], None]] = None) -> TimeSeries:
    """
    Integrate for n_periods periods, recording B_b = <phi(., t), f(., t)> record_every
    times per period (B_b is the survival amplitude <f0, f> when there is no bound state).

    Args:
        config: simulation configuration
        potential: override for V0(x, t), e.g. the zero potential
        progress: callback receiving the fraction completed

    Returns:
        TimeSeries with n_periods * record_every + 1 rows
    """
    try:
        validate_config(config)
        grid = config.grid
        propagator = SplitStepPropagator(config, potential)
        V = potential or potential_function(config.source)
        phi = bound_state_sampler(config)
        f0 = initial_field(config)
        interior = sponge_profile(grid, config.sponge) <= SPONGE_ACTIVE

        L = config.time_period
        interval = L / config.record_every
        n_records = config.n_periods * config.record_every
        times = interval * np.arange(n_records + 1)

        def project(samples, t):
            reference = phi(t) if phi is not None else f0.samples
            return grid.dx * np.vdot(reference, samples)

        B = np.empty(n_records + 1, dtype=complex)
        norms = np.empty(n_records + 1)
        interior_norms = np.empty(n_records + 1)
        schedule: List[Tuple[float, float]] = []

        samples = f0.samples
        B[0] = project(samples, 0.0)
        norms[0] = l2_norm(samples, grid.dx)
        interior_norms[0] = l2_norm(samples[interior], grid.dx)

        for r in range(n_records):
            t = times[r]
            dt = adapt_dt(t, config, V)
            samples, steps = advance_interval(propagator, samples, t, interval, dt, config, V)
            schedule.extend(steps)

            t_next = times[r + 1]
            B[r + 1] = project(samples, t_next)
            norms[r + 1] = l2_norm(samples, grid.dx)
            interior_norms[r + 1] = l2_norm(samples[interior], grid.dx)
            if progress is not None:
                progress((r + 1) / n_records)

        steps = np.array(schedule)
        logger.info(f"Run finished: eps={config.epsilon}, {len(steps)} steps, "
                    f"dt in [{steps[:, 1].min():.3e}, {steps[:, 1].max():.3e}], |B_b(T)|={abs(B[-1]):.8f}")
        return TimeSeries(times, B, norms, interior_norms, steps, WaveField(samples, grid, times[-1]))

    except Exception as e:
        logger.error(f"Error in solver run: {e}")
        raise


def integrate_reverse(field: WaveField, steps: np.ndarray, config: SimulationConfig,
                      potential: Optional[Potential] = None) -> WaveField:
    """
    Replay a recorded step schedule backwards with S(t, dt)^{-1} = C S(t, dt) C.
    Only valid without sponge damping.
    """
    if config.sponge.enabled and config.sponge.damping != 0:
        raise ValueError("Reverse integration needs the sponge switched off")
    propagator = SplitStepPropagator(config, potential)
    samples = field.samples
    steps = np.asarray(steps, dtype=float)
    for t, dt in steps[::-1]:
        samples = propagator.inverse_step(samples, t, dt)
    start = float(steps[0, 0]) if len(steps) else field.time
    return WaveField(samples, field.grid, start)
