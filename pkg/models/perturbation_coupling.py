"""
Perturbation theory for the breather modes of the two-soliton potential.

Builds the detuning perturbation W, samples the coupled-mode matrix elements
M(t), N(t, lambda) and optionally K(t, eta, lambda) over one period, expands them
in temporal Fourier series, and evaluates the resonances sigma_n, the decay rate
Gamma, the Lamb shift Lambda, the small-time coefficient and the amplitude
predictor. Independent oracles (adaptive time quadrature, finite-time kernel)
and a grid-doubling gate guard the results.
"""

import numpy as np
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Dict, List, Optional, Sequence, Tuple
from scipy.integrate import quad, solve_ivp

from config import (K_MAX, K_MAX_LIMIT, SAMPLES_PER_HARMONIC, ALIASING_THRESHOLD,
                    TRUNCATION_THRESHOLD, TERM_CUTOFF, ORACLE_TOLERANCE, ORACLE_RELEVANCE,
                    QUADRATURE_TAIL_LIMIT, QUADRATURE_STEP, QUADRATURE_EXTENT,
                    QUADRATURE_TAIL_FRACTION, SIGMA_FLOOR, ZERO_RESONANCE_TOL,
                    PREDICTOR_HORIZON, GATE_TOLERANCE, ORACLE_PERIODS, SPECTRAL_PANELS,
                    NODES_PER_PANEL, KERNEL_PANELS, KERNEL_NODES)
from models.separable_potential import TwoSolitonParams, two_soliton_potential
from models.spectral_basis import (SpectralGrid, psi_b_parity, psi_d_parity,
                                   default_lambda_max)
from utils.errors import (QuadratureDivergence, AliasingSuspected, NearZeroResonance,
                          ConvergenceGateFailure)
from utils.quadrature import uniform_panels, interpolate_on_panels

# Configure logging
logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

Sampler = Callable[[np.ndarray, float], np.ndarray]


# ---------------------------------------------------------------------------
# Perturbations
# ---------------------------------------------------------------------------

def detuning_W(p: TwoSolitonParams, epsilon: float, x, t) -> np.ndarray:
    """
    W = (1 + eps) V0(x / sqrt(1 + eps), t) - V0(x, t).

    Args:
        p: two-soliton parameters
        epsilon: detuning, > -1
        x: positions
        t: time

    Returns:
        real array shaped like x
    """
    if not epsilon > -1:
        raise ValueError(f"Detuning must exceed -1, got: {epsilon}")
    x = np.asarray(x, dtype=float)
    if epsilon == 0:
        return np.zeros(x.shape)
    scale = math.sqrt(1.0 + epsilon)
    return (1.0 + epsilon) * two_soliton_potential(p, x / scale, t) - two_soliton_potential(p, x, t)


def detuning_first_order(p: TwoSolitonParams, x, t, h: float = 1e-4) -> np.ndarray:
    """W1 = (1 - (x/2) d/dx) V0, derivative by centered differences."""
    x = np.asarray(x, dtype=float)
    v = two_soliton_potential(p, x, t)
    dv = (two_soliton_potential(p, x + h, t) - two_soliton_potential(p, x - h, t)) / (2.0 * h)
    return v - 0.5 * x * dv


@dataclass(frozen=True, eq=False)
class PerturbationSpec:
    """A real, even, L-periodic perturbation W(x, t)."""
    kind: str
    epsilon: float
    sampler: Sampler
    period: float

    @classmethod
    def detuning(cls, p: TwoSolitonParams, epsilon: float) -> "PerturbationSpec":
        if not epsilon > -1:
            raise ValueError(f"Detuning must exceed -1, got: {epsilon}")
        return cls("detuning", float(epsilon), lambda x, t: detuning_W(p, epsilon, x, t), p.period)

    @classmethod
    def custom(cls, sampler: Sampler, period: float) -> "PerturbationSpec":
        return cls("custom", float("nan"), sampler, float(period))

    def __call__(self, x, t) -> np.ndarray:
        return np.asarray(self.sampler(np.asarray(x, dtype=float), t))

    @property
    def vanishes(self) -> bool:
        return self.kind == "detuning" and self.epsilon == 0.0


def validate_perturbation(spec: PerturbationSpec, p: TwoSolitonParams, n_checks: int = 7) -> bool:
    """Reality, evenness and period of W on a fixed probe set."""
    if abs(spec.period - p.period) > 1e-12 * p.period:
        raise ValueError(f"Perturbation period {spec.period} differs from potential period {p.period}")

    x = np.linspace(0.1, 8.0 / p.rho1, 33)
    for t in np.linspace(0.0, p.period, n_checks, endpoint=False):
        w = spec(x, t)
        if np.iscomplexobj(w) and np.max(np.abs(w.imag)) > 0:
            raise ValueError(f"Perturbation must be real-valued, got imaginary part at t={t}")
        w = np.real(w)
        scale = max(1.0, float(np.max(np.abs(w))))
        if np.max(np.abs(spec(-x, t) - w)) > 1e-10 * scale:
            raise ValueError(f"Perturbation must be even in x, fails at t={t}")
        if np.max(np.abs(spec(x, t + p.period) - w)) > 1e-10 * scale:
            raise ValueError(f"Perturbation must be {p.period}-periodic, fails at t={t}")

    return True


# ---------------------------------------------------------------------------
# Matrix elements
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SpatialRule:
    """Half-line trapezoid rule for even integrands: x_k = k h, weights h, 2h, 2h, ..."""
    x: np.ndarray
    weights: np.ndarray

    @classmethod
    def for_params(cls, p: TwoSolitonParams, step: float = QUADRATURE_STEP,
                   extent: float = QUADRATURE_EXTENT) -> "SpatialRule":
        h = step / max(1.0, p.rho2)
        x = np.arange(0.0, extent / p.rho1 + 0.5 * h, h)
        weights = np.full(x.shape, 2.0 * h)
        weights[0] = h
        return cls(x, weights)


@dataclass(frozen=True, eq=False)
class MatrixElements:
    """Phase-dressed matrix elements at one time."""
    t: float
    M: float
    N: np.ndarray
    K: Optional[np.ndarray]
    w_psi_norm_sq: float


def _check_tail(rule: SpatialRule, envelope: np.ndarray, t: float) -> None:
    total = float(np.sum(envelope))
    if total == 0.0:
        return
    outer = rule.x >= (1.0 - QUADRATURE_TAIL_FRACTION) * rule.x[-1]
    tail = float(np.sum(envelope[outer]))
    if tail > QUADRATURE_TAIL_LIMIT * total:
        raise QuadratureDivergence(
            f"Spatial tail carries {tail / total:.2e} of the integrand at t={t:.4f}")


def matrix_elements(spec: PerturbationSpec, p: TwoSolitonParams, parity: str, t: float,
                    lambdas: np.ndarray, kernel_lambdas: Optional[np.ndarray] = None,
                    rule: Optional[SpatialRule] = None) -> MatrixElements:
    """
    M(t) = <Psi_b, W Psi_b>, N(t, lam) = <Psi_b, W Psi_d(lam)> e^{2i(lam^2 + beta)t} and,
    when kernel nodes are given, K(t, eta, lam) = <Psi_d(eta), W Psi_d(lam)> e^{2i(lam^2 - eta^2)t}.

    Integrands are even in x, so the quadrature runs over the half-line.
    """
    if parity not in ("even", "odd"):
        raise ValueError(f"Matrix elements need parity even or odd, got: {parity}")
    rule = rule or SpatialRule.for_params(p)
    lambdas = np.atleast_1d(np.asarray(lambdas, dtype=float))

    w = np.real(spec(rule.x, t))
    psi_b = psi_b_parity(p, parity, rule.x, t)
    _check_tail(rule, rule.weights * np.abs(w * psi_b), t)

    w_psi = rule.weights * w * psi_b
    M = float(np.real(np.vdot(psi_b, w_psi)))
    norm_sq = float(np.sum(rule.weights * np.abs(w * psi_b) ** 2))

    modes = psi_d_parity(p, parity, rule.x, t, lambdas)
    N = (modes @ np.conj(w_psi)) * np.exp(2j * (lambdas ** 2 + p.beta) * t)

    K = None
    if kernel_lambdas is not None:
        eta = np.asarray(kernel_lambdas, dtype=float)
        kernel_modes = psi_d_parity(p, parity, rule.x, t, eta)
        K = (np.conj(kernel_modes) * (rule.weights * w)) @ kernel_modes.T
        K = K * np.exp(2j * (eta[None, :] ** 2 - eta[:, None] ** 2) * t)

    return MatrixElements(float(t), M, N, K, norm_sq)


# ---------------------------------------------------------------------------
# Fourier analysis
# ---------------------------------------------------------------------------

def fourier_coeffs(samples: np.ndarray, k_max: int, real: bool = False) -> np.ndarray:
    """
    Coefficients c_k, k = -k_max..k_max, of f(t) = sum c_k e^{2 pi i k t / L}
    from samples at t_j = j L / N_t along the first axis.

    Returns:
        array of shape (2 k_max + 1, ...) indexed by k + k_max
    """
    samples = np.asarray(samples)
    n_t = samples.shape[0]
    if n_t < SAMPLES_PER_HARMONIC * k_max:
        raise ValueError(f"Need at least {SAMPLES_PER_HARMONIC * k_max} samples for K_max={k_max}, got: {n_t}")

    spectrum = np.fft.fft(samples, axis=0) / n_t
    harmonics = np.fft.fftfreq(n_t, d=1.0 / n_t)
    energy = np.abs(spectrum) ** 2
    total = float(np.sum(energy))
    top = float(np.sum(energy[np.abs(harmonics) > n_t / 4]))
    if total > 0 and top > ALIASING_THRESHOLD * total:
        raise AliasingSuspected(
            f"Top octave holds {top / total:.2e} of the energy with {n_t} samples")

    coeffs = spectrum[np.arange(-k_max, k_max + 1) % n_t]
    if real:
        coeffs = 0.5 * (coeffs + np.conj(coeffs[::-1]))
    return coeffs


def first_resonant_index(p: TwoSolitonParams, tol: float = ZERO_RESONANCE_TOL) -> int:
    """Smallest n with sigma_n > tol."""
    n = int(math.floor(p.beta * p.period / math.pi)) - 1
    while p.resonance(n) <= tol:
        n += 1
    return n


def resonance_table(p: TwoSolitonParams, k_max: int) -> List[Tuple[int, float]]:
    return [(n, float(p.resonance(n))) for n in range(-k_max, k_max + 1)]


@dataclass(frozen=True, eq=False)
class CouplingData:
    """Fourier coefficients of M, N (and optionally K) over one period."""
    params: TwoSolitonParams
    parity: str
    perturbation: PerturbationSpec
    k_max: int
    spectral: SpectralGrid
    times: np.ndarray
    M_samples: np.ndarray
    fourier_M: np.ndarray
    fourier_N: np.ndarray
    resonance_lambdas: Dict[int, float]
    fourier_N_resonant: Dict[int, complex]
    N_initial: np.ndarray
    w_psi_norm_sq: float
    fourier_K: Optional[np.ndarray] = None
    n_panels: int = SPECTRAL_PANELS

    @property
    def period(self) -> float:
        return self.params.period

    @property
    def beta(self) -> float:
        return self.params.beta

    @property
    def n0(self) -> int:
        return first_resonant_index(self.params)

    @property
    def harmonics(self) -> np.ndarray:
        return np.arange(-self.k_max, self.k_max + 1)

    def coefficient_N(self, n: int) -> np.ndarray:
        """N_n on the spectral nodes."""
        return self.fourier_N[n + self.k_max]

    def evaluate(self, coeffs: np.ndarray, t: float) -> np.ndarray:
        """Sum the Fourier series along the first axis at time t."""
        phases = np.exp(2j * np.pi * self.harmonics * t / self.period)
        return np.tensordot(phases, coeffs, axes=(0, 0))


def _coupling_grid(p: TwoSolitonParams, parity: str, k_max: int,
                   n_panels: int) -> Tuple[SpectralGrid, Dict[int, float]]:
    lambda_max = default_lambda_max(p, k_max)
    n0 = first_resonant_index(p)
    resonant = {n: math.sqrt(p.resonance(n)) for n in range(n0, k_max + 1)}
    breaks = [lam for lam in resonant.values() if lam < lambda_max]
    return SpectralGrid.build(parity, lambda_max, n_panels, NODES_PER_PANEL, breaks), resonant


def _sample_coupling(spec: PerturbationSpec, p: TwoSolitonParams, parity: str, k_max: int,
                     spectral: SpectralGrid, resonant: Dict[int, float],
                     kernel_grid: Optional[SpectralGrid], n_panels: int = SPECTRAL_PANELS) -> CouplingData:
    n_t = SAMPLES_PER_HARMONIC * k_max
    times = p.period * np.arange(n_t) / n_t
    rule = SpatialRule.for_params(p)
    res_n = sorted(resonant)
    res_lams = np.array([resonant[n] for n in res_n])
    nodes = np.concatenate([spectral.nodes, res_lams])
    kernel_nodes = kernel_grid.nodes if kernel_grid is not None else None

    M_samples = np.empty(n_t)
    N_samples = np.empty((n_t, nodes.size), dtype=complex)
    K_samples = None if kernel_nodes is None else np.empty((n_t, kernel_nodes.size, kernel_nodes.size), dtype=complex)
    norm_sq = 0.0
    for j, t in enumerate(times):
        elements = matrix_elements(spec, p, parity, t, nodes, kernel_nodes, rule)
        M_samples[j] = elements.M
        N_samples[j] = elements.N
        if K_samples is not None:
            K_samples[j] = elements.K
        if j == 0:
            norm_sq = elements.w_psi_norm_sq

    fourier_M = fourier_coeffs(M_samples, k_max, real=True)
    fourier_all = fourier_coeffs(N_samples, k_max)
    fourier_K = fourier_coeffs(K_samples, k_max) if K_samples is not None else None

    n_nodes = spectral.nodes.size
    on_resonance = {n: complex(fourier_all[n + k_max, n_nodes + i]) for i, n in enumerate(res_n)}
    return CouplingData(
        params=p, parity=parity, perturbation=spec, k_max=k_max, spectral=spectral,
        times=times, M_samples=M_samples, fourier_M=fourier_M,
        fourier_N=fourier_all[:, :n_nodes], resonance_lambdas=dict(resonant),
        fourier_N_resonant=on_resonance, N_initial=N_samples[0, :n_nodes],
        w_psi_norm_sq=norm_sq, fourier_K=fourier_K, n_panels=n_panels,
    )


def build_coupling(spec: PerturbationSpec, p: TwoSolitonParams, parity: str,
                   k_max: int = K_MAX, n_panels: int = SPECTRAL_PANELS,
                   spectral: Optional[SpectralGrid] = None, with_kernel: bool = False,
                   adaptive: bool = True) -> CouplingData:
    """
    Sample the matrix elements over one period and expand them in Fourier series.

    K_max doubles (up to K_MAX_LIMIT) while the top octave of the samples is not
    negligible or the last retained resonance still matters for Gamma.

    Args:
        spec: perturbation W
        p: two-soliton parameters
        parity: even or odd channel
        k_max: initial number of retained harmonics
        n_panels: continuum panels when the grid is built here
        spectral: fixed continuum grid (resonances then only sampled on-point)
        with_kernel: also sample K on the continuum grid
        adaptive: allow K_max doubling

    Returns:
        CouplingData
    """
    try:
        validate_perturbation(spec, p)
        while True:
            if spectral is None:
                grid, resonant = _coupling_grid(p, parity, k_max, n_panels)
            else:
                grid = spectral
                n0 = first_resonant_index(p)
                resonant = {n: math.sqrt(p.resonance(n)) for n in range(n0, k_max + 1)}

            try:
                coupling = _sample_coupling(spec, p, parity, k_max, grid, resonant,
                                            grid if with_kernel else None, n_panels)
            except AliasingSuspected as e:
                if not adaptive or 2 * k_max > K_MAX_LIMIT:
                    raise
                logger.info(f"{e}; doubling K_max to {2 * k_max}")
                k_max *= 2
                continue

            terms = _gamma_terms(coupling, excluded=())
            gamma = sum(terms.values())
            last = terms.get(k_max, 0.0)
            if adaptive and gamma > 0 and last > TRUNCATION_THRESHOLD * gamma:
                if 2 * k_max > K_MAX_LIMIT:
                    logger.warning(f"Resonance n={k_max} still holds {last / gamma:.2e} of Gamma at K_MAX_LIMIT")
                    return coupling
                logger.info(f"Resonance n={k_max} holds {last / gamma:.2e} of Gamma; doubling K_max")
                k_max *= 2
                continue

            logger.info(f"Coupling sampled: parity={parity}, K_max={k_max}, "
                        f"{grid.nodes.size} continuum nodes, {coupling.times.size} time samples")
            return coupling

    except Exception as e:
        logger.error(f"Error building coupling data: {e}")
        raise


# ---------------------------------------------------------------------------
# Gamma and Lambda
# ---------------------------------------------------------------------------

def zero_resonance_guard(p: TwoSolitonParams, parity: str, k_max: int,
                         drop_zero_resonance: bool = False) -> List[int]:
    """
    Harmonics to leave out of Gamma and Lambda.

    Raises:
        NearZeroResonance: an even-channel |sigma_n| < SIGMA_FLOOR that is not dropped
    """
    near = [n for n in range(-k_max, k_max + 1) if abs(p.resonance(n)) < SIGMA_FLOOR]
    if not near or parity != "even":
        return []
    if drop_zero_resonance:
        logger.warning(f"Dropping zero-energy resonance terms n={near}")
        return near
    sigma = ", ".join(f"sigma_{n}={p.resonance(n):.3e}" for n in near)
    logger.warning(f"Near-zero resonance in the even channel: {sigma}")
    raise NearZeroResonance(f"{sigma}. {NearZeroResonance.REMARK}")


def _excluded_resonances(coupling: CouplingData, drop_zero_resonance: bool) -> List[int]:
    return zero_resonance_guard(coupling.params, coupling.parity, coupling.k_max, drop_zero_resonance)


def _gamma_terms(coupling: CouplingData, excluded: Sequence[int]) -> Dict[int, float]:
    terms = {}
    for n, lam in coupling.resonance_lambdas.items():
        if n in excluded or n > coupling.k_max:
            continue
        value = coupling.fourier_N_resonant[n]
        terms[n] = 0.25 * math.pi * abs(value) ** 2 / lam
    return terms


def golden_rule_terms(coupling: CouplingData, drop_zero_resonance: bool = False) -> Dict[int, float]:
    """Per-resonance contributions (pi/4)|N_n(sqrt(sigma_n))|^2 / sqrt(sigma_n)."""
    excluded = _excluded_resonances(coupling, drop_zero_resonance)
    terms = _gamma_terms(coupling, excluded)
    gamma = sum(terms.values())
    return {n: v for n, v in terms.items() if v >= TERM_CUTOFF * gamma}


def golden_rule(coupling: CouplingData, drop_zero_resonance: bool = False) -> float:
    """Decay rate Gamma = sum over n >= n0 of the golden-rule terms."""
    terms = golden_rule_terms(coupling, drop_zero_resonance)
    gamma = float(sum(terms.values()))
    logger.info(f"Gamma = {gamma:.6e} over {len(terms)} resonances")
    return gamma


def lamb_shift_terms(coupling: CouplingData, drop_zero_resonance: bool = False) -> Dict[int, float]:
    """
    Per-harmonic terms of Lambda = sum_n P.V. int_0^inf |N_n(lam)|^2 / (2 (lam^2 - sigma_n)) dlam.

    Resonant terms subtract the singular value: with G = |N_n|^2 / (2 (lam + lam_n)),
    int (G - G(lam_n)) / (lam - lam_n) + G(lam_n) ln((lam_max - lam_n) / lam_n).
    """
    excluded = set(_excluded_resonances(coupling, drop_zero_resonance))
    lam = coupling.spectral.nodes
    w = coupling.spectral.weights
    lam_max = coupling.spectral.lambda_max
    n0 = coupling.n0

    terms = {}
    for n in coupling.harmonics:
        n = int(n)
        if n in excluded:
            continue
        density = np.abs(coupling.coefficient_N(n)) ** 2
        sigma = float(coupling.params.resonance(n))
        lam_n = coupling.resonance_lambdas.get(n) if n >= n0 else None

        if lam_n is None or lam_n >= lam_max:
            terms[n] = float(np.sum(w * density / (2.0 * (lam ** 2 - sigma))))
            continue

        G = density / (2.0 * (lam + lam_n))
        G_n = abs(coupling.fourier_N_resonant[n]) ** 2 / (4.0 * lam_n)
        regular = float(np.sum(w * (G - G_n) / (lam - lam_n)))
        terms[n] = regular + G_n * math.log((lam_max - lam_n) / lam_n)

    return terms


def lamb_shift(coupling: CouplingData, drop_zero_resonance: bool = False) -> float:
    """Lamb shift Lambda, the principal-value continuum sum."""
    terms = lamb_shift_terms(coupling, drop_zero_resonance)
    value = float(math.fsum(terms.values()))
    logger.info(f"Lambda = {value:.6e} over {len(terms)} harmonics")
    return value


def small_time_coefficient(coupling: CouplingData) -> float:
    """C = int_0^inf |N(0, lam)|^2 dlam, so |A_b(t)|^2 = 1 - C t^2 + O(t^3)."""
    return float(np.sum(coupling.spectral.weights * np.abs(coupling.N_initial) ** 2))


def small_time_cross_check(coupling: CouplingData) -> float:
    """The same C from ||W Psi_b||^2 - M(0)^2."""
    return float(coupling.w_psi_norm_sq - coupling.M_samples[0] ** 2)


# ---------------------------------------------------------------------------
# Prediction
# ---------------------------------------------------------------------------

@dataclass
class DecayPrediction:
    """Mean shift, decay rate, Lamb shift and resonance bookkeeping for one run."""
    parity: str
    epsilon: float
    Mbar: float
    Gamma: float
    Lambda: float
    beta: float
    period: float
    n0: int
    k_max: int
    resonances: List[Tuple[int, float]]
    contributions: Dict[int, float]
    lamb_terms: Dict[int, float]
    fourier_M: np.ndarray
    small_time: float = 0.0
    small_time_check: float = 0.0
    dropped: List[int] = field(default_factory=list)
    convergence: Dict = field(default_factory=dict)

    def to_dict(self) -> Dict:
        return {
            "parity": self.parity,
            "epsilon": self.epsilon,
            "Mbar": self.Mbar,
            "Gamma": self.Gamma,
            "Lambda": self.Lambda,
            "beta": self.beta,
            "period": self.period,
            "n0": self.n0,
            "k_max": self.k_max,
            "resonances": [{"n": n, "sigma": s} for n, s in self.resonances],
            "contributions": {str(n): v for n, v in self.contributions.items()},
            "lamb_terms": {str(n): v for n, v in self.lamb_terms.items()},
            "fourier_M": [[float(c.real), float(c.imag)] for c in self.fourier_M],
            "small_time": self.small_time,
            "small_time_check": self.small_time_check,
            "dropped": list(self.dropped),
            "convergence": self.convergence,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "DecayPrediction":
        return cls(
            parity=data["parity"], epsilon=data["epsilon"], Mbar=data["Mbar"],
            Gamma=data["Gamma"], Lambda=data["Lambda"], beta=data["beta"],
            period=data["period"], n0=data["n0"], k_max=data["k_max"],
            resonances=[(r["n"], r["sigma"]) for r in data["resonances"]],
            contributions={int(n): v for n, v in data["contributions"].items()},
            lamb_terms={int(n): v for n, v in data["lamb_terms"].items()},
            fourier_M=np.array([complex(re, im) for re, im in data["fourier_M"]]),
            small_time=data.get("small_time", 0.0),
            small_time_check=data.get("small_time_check", 0.0),
            dropped=list(data.get("dropped", [])),
            convergence=dict(data.get("convergence", {})),
        )


def predict_decay(coupling: CouplingData, drop_zero_resonance: bool = False) -> DecayPrediction:
    """Collect Mbar, Gamma, Lambda and the small-time coefficient from one coupling sample."""
    contributions = golden_rule_terms(coupling, drop_zero_resonance)
    lamb_terms = lamb_shift_terms(coupling, drop_zero_resonance)
    gamma = float(sum(contributions.values()))
    lam = float(math.fsum(lamb_terms.values()))
    mbar = float(coupling.fourier_M[coupling.k_max].real)
    dropped = _excluded_resonances(coupling, drop_zero_resonance)

    logger.info(f"Prediction ({coupling.parity}): Mbar={mbar:.6e}, Gamma={gamma:.6e}, Lambda={lam:.6e}")
    return DecayPrediction(
        parity=coupling.parity,
        epsilon=coupling.perturbation.epsilon,
        Mbar=mbar, Gamma=gamma, Lambda=lam,
        beta=coupling.beta, period=coupling.period,
        n0=coupling.n0, k_max=coupling.k_max,
        resonances=resonance_table(coupling.params, coupling.k_max),
        contributions=contributions, lamb_terms=lamb_terms,
        fourier_M=coupling.fourier_M.copy(),
        small_time=small_time_coefficient(coupling),
        small_time_check=small_time_cross_check(coupling),
        dropped=dropped,
    )


def integrated_M(fourier_M: np.ndarray, period: float, t) -> np.ndarray:
    """int_0^t M(s) ds from the Fourier coefficients."""
    t = np.asarray(t, dtype=float)
    k_max = (len(fourier_M) - 1) // 2
    k = np.arange(-k_max, k_max + 1)
    omega = 2.0 * np.pi * k / period
    total = fourier_M[k_max].real * t
    for c, w in zip(fourier_M[k != 0], omega[k != 0]):
        total = total + np.real(c * np.expm1(1j * w * t) / (1j * w))
    return total


def predict_amplitude(pred: DecayPrediction, t, a0: complex = 1.0, convention: str = "floquet") -> np.ndarray:
    """
    A_b(t) = A_b(0) e^{2i beta t} e^{-Gamma|t|} e^{i Lambda t} e^{-i int_0^t M}.

    With convention="raw" the factor e^{2i beta t} is left out, giving the projection B_b(t).
    """
    t = np.asarray(t, dtype=float)
    if pred.Gamma > 0 and np.max(np.abs(t), initial=0.0) > PREDICTOR_HORIZON / pred.Gamma:
        logger.warning(f"Predictor used beyond {PREDICTOR_HORIZON}/Gamma = {PREDICTOR_HORIZON / pred.Gamma:.3e}")

    phase = pred.Lambda * t - integrated_M(pred.fourier_M, pred.period, t)
    if convention == "floquet":
        phase = phase + 2.0 * pred.beta * t
    elif convention != "raw":
        raise ValueError(f"Unknown amplitude convention: {convention}")
    return a0 * np.exp(-pred.Gamma * np.abs(t)) * np.exp(1j * phase)


# ---------------------------------------------------------------------------
# Oracles and gates
# ---------------------------------------------------------------------------

def quad_fourier_coefficient(spec: PerturbationSpec, p: TwoSolitonParams, parity: str,
                             lam: float, n: int) -> complex:
    """
    N_n(lam) by adaptive quadrature in time (scipy quad with Fourier weights)
    over fresh spatial quadratures of N(t, lam).
    """
    rule = SpatialRule.for_params(p)
    L = p.period

    @lru_cache(maxsize=None)
    def value(t: float) -> complex:
        return complex(matrix_elements(spec, p, parity, t, np.array([lam]), rule=rule).N[0])

    def re(t):
        return value(t).real

    def im(t):
        return value(t).imag

    options = dict(epsabs=1e-15 * L, epsrel=1e-11, limit=200)
    if n == 0:
        real_part = quad(re, 0.0, L, **options)[0]
        imag_part = quad(im, 0.0, L, **options)[0]
        return complex(real_part, imag_part) / L

    omega = 2.0 * math.pi * n / L
    re_cos = quad(re, 0.0, L, weight="cos", wvar=omega, **options)[0]
    re_sin = quad(re, 0.0, L, weight="sin", wvar=omega, **options)[0]
    im_cos = quad(im, 0.0, L, weight="cos", wvar=omega, **options)[0]
    im_sin = quad(im, 0.0, L, weight="sin", wvar=omega, **options)[0]
    return complex(re_cos + im_sin, im_cos - re_sin) / L


def oracle_gate(coupling: CouplingData, prediction: DecayPrediction) -> Dict[int, Dict[str, float]]:
    """Compare FFT-derived N_n(sqrt(sigma_n)) with the adaptive-quadrature value for every relevant resonance."""
    report = {}
    for n, term in prediction.contributions.items():
        if prediction.Gamma <= 0 or term < ORACLE_RELEVANCE * prediction.Gamma:
            continue
        lam = coupling.resonance_lambdas[n]
        fft_value = coupling.fourier_N_resonant[n]
        quad_value = quad_fourier_coefficient(coupling.perturbation, coupling.params, coupling.parity, lam, n)
        rel = abs(fft_value - quad_value) / max(abs(quad_value), 1e-300)
        report[n] = {"fft": abs(fft_value), "quad": abs(quad_value), "relative": rel}
        logger.debug(f"Oracle n={n}: |N_n| fft={abs(fft_value):.12e} quad={abs(quad_value):.12e}")
        if rel > ORACLE_TOLERANCE:
            raise ConvergenceGateFailure(
                f"Fourier coefficient N_{n} disagrees with quadrature oracle: relative {rel:.2e}")
    return report


def convergence_gate(coupling: CouplingData, prediction: DecayPrediction,
                     drop_zero_resonance: bool = False) -> Dict[str, float]:
    """
    Recompute Gamma and Lambda with twice the continuum panels and twice K_max;
    a relative change of GATE_TOLERANCE or more fails the gate.
    """
    if coupling.perturbation.vanishes:
        return {"gamma_change": 0.0, "lambda_change": 0.0}

    n_panels = 2 * coupling.n_panels
    k_max = min(2 * coupling.k_max, K_MAX_LIMIT)
    refined = build_coupling(coupling.perturbation, coupling.params, coupling.parity,
                             k_max=k_max, n_panels=n_panels, adaptive=False)
    gamma = golden_rule(refined, drop_zero_resonance)
    lam = lamb_shift(refined, drop_zero_resonance)

    def change(new, old):
        scale = max(abs(new), abs(old))
        return 0.0 if scale == 0 else abs(new - old) / scale

    report = {"gamma_change": change(gamma, prediction.Gamma),
              "lambda_change": change(lam, prediction.Lambda)}
    logger.info(f"Convergence gate: dGamma={report['gamma_change']:.2e}, dLambda={report['lambda_change']:.2e}")
    if report["gamma_change"] >= GATE_TOLERANCE or report["lambda_change"] >= GATE_TOLERANCE:
        raise ConvergenceGateFailure(
            f"Doubling resolution changed Gamma by {report['gamma_change']:.2%} "
            f"and Lambda by {report['lambda_change']:.2%}")
    return report


def gamma_time_average(coupling: CouplingData, T0: Optional[float] = None,
                       drop_zero_resonance: bool = False, chunk: int = 20000) -> Tuple[float, float]:
    """
    Finite-time kernel sum_n int |N_n|^2 (1 - e^{-2i(lam^2 - sigma_n)T0}) / (2i(lam^2 - sigma_n)) dlam.

    |N_n|^2 is interpolated per panel onto a grid resolving the kernel's oscillation at T0.

    Returns:
        (real part, minus imaginary part), which tend to (Gamma, Lambda) as T0 grows
    """
    T0 = ORACLE_PERIODS * coupling.period if T0 is None else float(T0)
    excluded = set(_excluded_resonances(coupling, drop_zero_resonance))
    keep = np.array([int(n) not in excluded for n in coupling.harmonics])
    sigma = coupling.params.resonance(coupling.harmonics[keep])
    density = np.abs(coupling.fourier_N[keep]) ** 2

    rule = coupling.spectral.rule
    lam_max = coupling.spectral.lambda_max
    width = NODES_PER_PANEL / (4.0 * lam_max * T0)
    n_panels = int(math.ceil(lam_max / width))
    dense = uniform_panels(0.0, lam_max, n_panels, NODES_PER_PANEL)

    total = 0.0 + 0.0j
    for start in range(0, dense.nodes.size, chunk):
        lam = dense.nodes[start:start + chunk]
        w = dense.weights[start:start + chunk]
        values = np.maximum(interpolate_on_panels(rule, density, lam), 0.0)
        u = lam[None, :] ** 2 - sigma[:, None]
        small = np.abs(u) * T0 < 1e-8
        safe = np.where(small, 1.0, u)
        kernel = np.where(small, T0 + 0.0j, -np.expm1(-2j * safe * T0) / (2j * safe))
        total += np.sum(values * kernel * w[None, :])

    logger.info(f"Time-averaged kernel at T0={T0:.1f}: Gamma~{total.real:.6e}, Lambda~{-total.imag:.6e}")
    return float(total.real), float(-total.imag)


# ---------------------------------------------------------------------------
# Coupled-mode reduced model
# ---------------------------------------------------------------------------

def kernel_grid(p: TwoSolitonParams, parity: str) -> SpectralGrid:
    """Coarse continuum grid for the coupled-mode model."""
    return SpectralGrid.build(parity, default_lambda_max(p),
                              KERNEL_PANELS, KERNEL_NODES)


def integrate_coupled_modes(coupling: CouplingData, t_end: float, n_samples: int = 200,
                            with_kernel: bool = True, rtol: float = 1e-8,
                            atol: float = 1e-10) -> Tuple[np.ndarray, np.ndarray]:
    """
    Integrate the bound/continuum amplitude system on the coupling's continuum grid:

        i dB_b/dt = M B_b + sum_j w_j N(t, lam_j) e^{-2i(lam_j^2 + beta)t} B_d(lam_j)
        i dB_d/dt = conj(N) e^{2i(lam^2 + beta)t} B_b + sum_j w_j K(t, lam, lam_j) e^{-2i(lam_j^2 - lam^2)t} B_d(lam_j)

    starting from B_b = 1, B_d = 0.

    Returns:
        (times, B_b(times))
    """
    if with_kernel and coupling.fourier_K is None:
        raise ValueError("Coupled-mode model with continuum coupling needs K; build the coupling with with_kernel=True")

    lam = coupling.spectral.nodes
    w = coupling.spectral.weights
    beta = coupling.beta

    def rhs(t, y):
        b, d = y[0], y[1:]
        M = coupling.evaluate(coupling.fourier_M, t).real
        N = coupling.evaluate(coupling.fourier_N, t)
        to_bound = N * np.exp(-2j * (lam ** 2 + beta) * t)
        db = -1j * (M * b + np.sum(w * to_bound * d))
        dd = -1j * np.conj(to_bound) * b
        if with_kernel:
            K = coupling.evaluate(coupling.fourier_K, t)
            dressed = K * np.exp(-2j * (lam[None, :] ** 2 - lam[:, None] ** 2) * t)
            dd = dd - 1j * (dressed @ (w * d))
        return np.concatenate([[db], dd])

    y0 = np.zeros(lam.size + 1, dtype=complex)
    y0[0] = 1.0
    times = np.linspace(0.0, t_end, n_samples)
    solution = solve_ivp(rhs, (0.0, t_end), y0, method="DOP853", t_eval=times, rtol=rtol, atol=atol)
    if not solution.success:
        raise RuntimeError(f"Coupled-mode integration failed: {solution.message}")
    logger.info(f"Coupled-mode model integrated to t={t_end:.3f} with {lam.size} continuum nodes")
    return solution.t, solution.y[0]
