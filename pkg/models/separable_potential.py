"""
Separable time-dependent potentials built from discrete spectral data.

A set of points lambda_k in the upper half-plane with normalization vectors g^(k)
determines polynomial coefficients a^(p)(x,t), b^(p)(x,t) through a square linear
system, and from them the generating function a(x,t,lambda) and the potential
V0 = -4 sum_n |b_n^(M-1)|^2. The two-soliton family with purely imaginary
points has closed forms, evaluated here without overflow at any x.
"""

import numpy as np
import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import reduce
from typing import Callable, Optional, Tuple, Union
import scipy.linalg

from config import (CONDITION_CEILING, OVERFLOW_GUARD, COMMENSURATE_TOL,
                    MAX_DENOMINATOR, RESIDUAL_TOLERANCE)
from utils.errors import SingularSystem, NotImaginarySpectrum

# Configure logging
logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]


def validate_discrete_data(lambdas: np.ndarray, g_vectors: np.ndarray) -> bool:
    """Check upper half-plane, distinctness and shape of the generators."""
    if lambdas.ndim != 1 or lambdas.size == 0:
        raise ValueError(f"Need a non-empty list of spectral points, got shape {lambdas.shape}")

    if np.any(~np.isfinite(lambdas)):
        raise ValueError(f"Spectral points must be finite, got: {lambdas}")

    if np.any(lambdas.imag <= 0):
        raise ValueError(f"Spectral points must lie in the upper half-plane, got: {lambdas}")

    gaps = np.abs(lambdas[:, None] - lambdas[None, :]) + np.eye(lambdas.size)
    if np.min(gaps) < 1e-12:
        raise ValueError(f"Spectral points must be pairwise distinct, got: {lambdas}")

    if g_vectors.ndim != 2 or g_vectors.shape[0] != lambdas.size:
        raise ValueError(f"Expected {lambdas.size} normalization vectors, got shape {g_vectors.shape}")

    if np.any(np.linalg.norm(g_vectors, axis=1) == 0):
        raise ValueError("Normalization vectors must be nonzero")

    return True


@dataclass(frozen=True, eq=False)
class DiscreteData:
    """Generators (lambda_k, g^(k)) of a separable potential."""
    lambdas: np.ndarray
    g_vectors: np.ndarray

    def __post_init__(self):
        lambdas = np.atleast_1d(np.asarray(self.lambdas, dtype=complex))
        g = np.asarray(self.g_vectors, dtype=complex)
        if g.ndim == 1:
            g = g.reshape(-1, 1)
        validate_discrete_data(lambdas, g)
        object.__setattr__(self, "lambdas", lambdas)
        object.__setattr__(self, "g_vectors", g)

    @property
    def M(self) -> int:
        return int(self.lambdas.size)

    @property
    def N(self) -> int:
        return int(self.g_vectors.shape[1])

    @property
    def rho_max(self) -> float:
        return float(np.max(self.lambdas.imag))

    def is_imaginary(self, tol: float = COMMENSURATE_TOL) -> bool:
        scale = max(1.0, float(np.max(np.abs(self.lambdas))))
        return bool(np.all(np.abs(self.lambdas.real) <= tol * scale))


@dataclass(frozen=True)
class TwoSolitonParams:
    """Two purely imaginary points i*rho1, i*rho2 with unit phases e^{i theta_k}."""
    rho1: float
    rho2: float
    theta1: float = 0.0
    theta2: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.rho1) and np.isfinite(self.rho2)):
            raise ValueError(f"rho values must be finite, got: ({self.rho1}, {self.rho2})")
        if not (0 < self.rho1 < self.rho2):
            raise ValueError(f"Need 0 < rho1 < rho2, got: ({self.rho1}, {self.rho2})")

    @property
    def s(self) -> float:
        return self.rho2 + self.rho1

    @property
    def d(self) -> float:
        return self.rho2 - self.rho1

    @property
    def period(self) -> float:
        return math.pi / (self.s * self.d)

    @property
    def omega(self) -> float:
        return 2.0 * self.s * self.d

    @property
    def beta(self) -> float:
        # branch choice: rho1^2, equal to rho2^2 modulo pi / L
        return self.rho1 ** 2

    @property
    def floquet_multiplier(self) -> complex:
        return complex(np.exp(2j * self.beta * self.period))

    def resonance(self, n: Union[int, np.ndarray]) -> Union[float, np.ndarray]:
        """sigma_n = pi n / L - beta."""
        return math.pi * np.asarray(n) / self.period - self.beta

    def to_discrete_data(self) -> DiscreteData:
        return DiscreteData(
            lambdas=np.array([1j * self.rho1, 1j * self.rho2]),
            g_vectors=np.array([[np.exp(1j * self.theta1)], [np.exp(1j * self.theta2)]]),
        )


@dataclass(frozen=True, eq=False)
class CoefficientSolution:
    """Coefficients a^(p) (M,) and b^(p)_n (M, N) at one (x, t)."""
    a_coeffs: np.ndarray
    b_coeffs: np.ndarray
    x: float
    t: float
    condition: float


@dataclass(frozen=True)
class PeriodReport:
    """Outcome of the commensurability search."""
    kind: str                          # stationary | periodic | quasiperiodic
    period: Optional[float]
    frequency: float                   # fundamental Omega_0
    integers: Tuple[int, ...]
    offset: float                      # Delta in rho_k^2 = n_k Omega_0 / 2 + Delta
    multipliers: Tuple[complex, ...]


# ---------------------------------------------------------------------------
# General constructor
# ---------------------------------------------------------------------------

def _phase_exponent(lams: np.ndarray, x: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Exponent of e^{-2i(lambda x + lambda^2 t)} for every (point, lambda)."""
    return -2j * (lams[None, :] * x[:, None] + lams[None, :] ** 2 * t[:, None])


def assemble_system(data: DiscreteData, x: ArrayLike, t: ArrayLike) -> Tuple[np.ndarray, np.ndarray]:
    """
    Assemble the dressing system at a batch of (x, t) points.

    Unknowns are ordered a^(0..M-1) followed by b^(p)_n at index M + p*N + n.
    Every row carrying an exponential larger than one is divided by it, and rows
    are then equilibrated, so no entry overflows and all entries are at most one.

    Returns:
        (matrices of shape (n, m, m), right-hand sides of shape (n, m))
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    t = np.broadcast_to(np.asarray(t, dtype=float), x.shape).ravel()
    x = x.ravel()

    M, N = data.M, data.N
    lam = data.lambdas
    lam_bar = np.conj(lam)
    g = data.g_vectors
    size = M * (N + 1)
    powers = np.arange(M)

    z = _phase_exponent(lam, x, t)
    z_bar = _phase_exponent(lam_bar, x, t)
    shift = np.maximum(z.real, 0.0)
    shift_bar = np.maximum(z_bar.real, 0.0)
    a_side, b_side = np.exp(z - shift), np.exp(-shift)
    a_side_bar, b_side_bar = np.exp(z_bar - shift_bar), np.exp(-shift_bar)

    lam_pow = lam[:, None] ** powers[None, :]
    lam_bar_pow = lam_bar[:, None] ** powers[None, :]

    A = np.zeros((x.size, size, size), dtype=complex)
    rhs = np.zeros((x.size, size), dtype=complex)

    for k in range(M):
        # a(lambda_k) = g^(k)^dagger b(lambda_k)
        A[:, k, :M] = lam_pow[k][None, :] * a_side[:, k, None]
        for p in range(M):
            A[:, k, M + p * N:M + (p + 1) * N] = -np.conj(g[k])[None, :] * lam_pow[k, p] * b_side[:, k, None]
        rhs[:, k] = -lam[k] ** M * a_side[:, k]

        # b(conj lambda_k) = -a(conj lambda_k) g^(k)
        for n in range(N):
            row = M + k * N + n
            A[:, row, :M] = g[k, n] * lam_bar_pow[k][None, :] * a_side_bar[:, k, None]
            for p in range(M):
                A[:, row, M + p * N + n] = lam_bar_pow[k, p] * b_side_bar[:, k]
            rhs[:, row] = -g[k, n] * lam_bar[k] ** M * a_side_bar[:, k]

    row_scale = np.max(np.abs(A), axis=2)
    A /= row_scale[..., None]
    rhs /= row_scale
    return A, rhs


def _split_unknowns(data: DiscreteData, z: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    M, N = data.M, data.N
    a = z[..., :M]
    b = z[..., M:].reshape(z.shape[:-1] + (M, N))
    return a, b


def solve_dressing(data: DiscreteData, x: float, t: float) -> CoefficientSolution:
    """
    Solve the dressing system at one (x, t) by partial-pivot LU.

    Args:
        data: discrete data
        x: position
        t: time

    Returns:
        CoefficientSolution with a^(p), b^(p) and the system's condition number
    """
    if not (np.isfinite(x) and np.isfinite(t)):
        raise ValueError(f"x and t must be finite, got: ({x}, {t})")

    try:
        A, rhs = assemble_system(data, x, t)
        matrix, vector = A[0], rhs[0]
        condition = float(np.linalg.cond(matrix))
        if not np.isfinite(condition) or condition > CONDITION_CEILING:
            raise SingularSystem(f"Dressing system at x={x}, t={t} has condition {condition:.3e}")

        lu, piv = scipy.linalg.lu_factor(matrix)
        solution = scipy.linalg.lu_solve((lu, piv), vector)
        a, b = _split_unknowns(data, solution)
        result = CoefficientSolution(a_coeffs=a, b_coeffs=b, x=float(x), t=float(t), condition=condition)

        residual = dressing_residual(data, result)
        if residual > RESIDUAL_TOLERANCE:
            raise SingularSystem(f"Dressing residual {residual:.3e} at x={x}, t={t} exceeds {RESIDUAL_TOLERANCE}")
        return result

    except SingularSystem:
        raise
    except Exception as e:
        logger.error(f"Error solving dressing system at x={x}, t={t}: {e}")
        raise


def solve_dressing_batch(data: DiscreteData, x: ArrayLike, t: ArrayLike) -> Tuple[np.ndarray, np.ndarray]:
    """
    Batched version of solve_dressing over arrays of x (t scalar or broadcastable).

    Returns:
        (a of shape (n, M), b of shape (n, M, N))
    """
    A, rhs = assemble_system(data, x, t)
    condition = np.linalg.cond(A)
    bad = ~np.isfinite(condition) | (condition > CONDITION_CEILING)
    if np.any(bad):
        worst = int(np.argmax(np.where(np.isfinite(condition), condition, np.inf)))
        raise SingularSystem(f"Dressing system singular at {int(bad.sum())} points "
                             f"(worst condition {condition[worst]:.3e})")
    z = np.linalg.solve(A, rhs[..., None])[..., 0]
    return _split_unknowns(data, z)


def dressing_residual(data: DiscreteData, solution: CoefficientSolution) -> float:
    """Largest row residual of the dressing relations relative to row norms."""
    A, rhs = assemble_system(data, solution.x, solution.t)
    z = np.concatenate([solution.a_coeffs, solution.b_coeffs.ravel()])
    residual = np.abs(A[0] @ z - rhs[0])
    scale = np.abs(A[0]) @ np.abs(z) + np.abs(rhs[0])
    return float(np.max(residual / scale))


def _polynomial(a_coeffs: np.ndarray, lam: np.ndarray) -> np.ndarray:
    """lambda^M + sum_p lambda^p a^(p), broadcasting a over leading axes."""
    M = a_coeffs.shape[-1]
    result = lam ** M
    for p in range(M):
        result = result + a_coeffs[..., p, None] * lam ** p
    return result


def eval_a(data: DiscreteData, x: ArrayLike, t: float, lam: Union[complex, np.ndarray]) -> np.ndarray:
    """
    Generating function a(x, t, lambda) = (lambda^M + sum lambda^p a^(p)) e^{-2i(lambda x + lambda^2 t)}.

    Returns:
        array of shape (len(x), len(lambda)); scalars are squeezed
    """
    scalar = np.ndim(x) == 0 and np.ndim(lam) == 0
    x_arr = np.atleast_1d(np.asarray(x, dtype=float))
    lam_arr = np.atleast_1d(np.asarray(lam, dtype=complex))

    a, _ = solve_dressing_batch(data, x_arr, t)
    poly = _polynomial(a, lam_arr[None, :])
    phase = np.exp(_phase_exponent(lam_arr, x_arr, np.full(x_arr.shape, float(t))))
    values = poly * phase
    return complex(values[0, 0]) if scalar else values


def eval_bound_generator(data: DiscreteData, k: int, x: ArrayLike, t: float) -> np.ndarray:
    """
    a(x, t, conj(lambda_k)) evaluated without cancellation.

    Where e^{-2i(...)} is large the relation a(conj lambda_k) = -g^dagger b(conj lambda_k) / |g|^2
    replaces the direct product.
    """
    x_arr = np.atleast_1d(np.asarray(x, dtype=float))
    lam_bar = np.conj(data.lambdas[k])
    a, b = solve_dressing_batch(data, x_arr, t)

    z = _phase_exponent(np.array([lam_bar]), x_arr, np.full(x_arr.shape, float(t)))[:, 0]
    direct = _polynomial(a, np.array([lam_bar]))[:, 0] * np.exp(np.minimum(z.real, 0.0) + 1j * z.imag)

    g = data.g_vectors[k]
    powers = lam_bar ** np.arange(data.M)
    b_at = np.einsum("ipn,p->in", b, powers)
    via_b = -(b_at @ np.conj(g)) / np.vdot(g, g).real

    return np.where(z.real > 0, via_b, direct)


def eval_potential(data: DiscreteData, x: ArrayLike, t: float) -> np.ndarray:
    """
    V0(x, t) = -4 sum_n |b_n^(M-1)(x, t)|^2, exactly zero beyond the overflow guard.
    """
    x_arr = np.atleast_1d(np.asarray(x, dtype=float))
    values = np.zeros(x_arr.shape)
    inside = np.abs(x_arr) * data.rho_max <= OVERFLOW_GUARD
    if np.any(inside):
        _, b = solve_dressing_batch(data, x_arr[inside], t)
        values[inside] = -4.0 * np.sum(np.abs(b[:, -1, :]) ** 2, axis=-1)
    return float(values[0]) if np.ndim(x) == 0 else values


# ---------------------------------------------------------------------------
# Two-soliton closed forms
# ---------------------------------------------------------------------------

def two_soliton_fields(p: TwoSolitonParams, x: ArrayLike, t: ArrayLike) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Closed-form b^(1), a^(0), a^(1) for the two-soliton family.

    Hyperbolic functions are scaled by e^{-2 s |x|} and parity is applied afterwards
    (b^(1), a^(0) even; a^(1) odd), so the expressions stay finite for any x.
    """
    x, t = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(t, dtype=float))
    y = np.abs(x)
    sign = np.where(x < 0, -1.0, 1.0)
    r1, r2, s, d = p.rho1, p.rho2, p.s, p.d

    def decay(rate):
        return np.exp(-rate * y)

    e4r1, e4r2, e4s = decay(4 * r1), decay(4 * r2), decay(4 * s)
    e2s = decay(2 * s)
    psi = p.omega * t + p.theta2 - p.theta1

    denominator = d ** 2 * (1 + e4s) / 2 + s ** 2 * (e4r1 + e4r2) / 2 - 4 * r1 * r2 * np.cos(psi) * e2s

    cosh1 = (decay(2 * r2) + decay(2 * (2 * r1 + r2))) / 2
    cosh2 = (decay(2 * r1) + decay(2 * (r1 + 2 * r2))) / 2
    phase1 = np.exp(1j * (2 * r1 ** 2 * t + p.theta1))
    phase2 = np.exp(1j * (2 * r2 ** 2 * t + p.theta2))
    b1 = 2j * s * d * (r2 * cosh1 * phase2 - r1 * cosh2 * phase1) / denominator

    denominator_a = -denominator / 2
    sinh_sinh = (1 - e4r1 - e4r2 + e4s) / 4
    numerator0 = r1 * r2 * (s ** 2 * sinh_sinh
                            + (r1 ** 2 * np.exp(-1j * psi) + r2 ** 2 * np.exp(1j * psi)) * e2s
                            - r1 * r2 * (1 + e4s))
    a0 = numerator0 / denominator_a

    cosh2_sinh1 = (1 - e4r1 + e4r2 - e4s) / 4
    cosh1_sinh2 = (1 + e4r1 - e4r2 - e4s) / 4
    a1 = sign * 1j * ((r1 ** 2 - r2 ** 2) * r1 * cosh2_sinh1
                      + (r2 ** 2 - r1 ** 2) * r2 * cosh1_sinh2) / denominator_a

    return b1, a0, a1


def two_soliton_potential(p: TwoSolitonParams, x: ArrayLike, t: ArrayLike) -> np.ndarray:
    b1, _, _ = two_soliton_fields(p, x, t)
    return -4.0 * np.abs(b1) ** 2


def two_soliton_a(p: TwoSolitonParams, x: ArrayLike, t: float, lam: Union[complex, np.ndarray]) -> np.ndarray:
    """a(x, t, lambda) from the closed forms; shape (len(x), len(lambda))."""
    x_arr = np.atleast_1d(np.asarray(x, dtype=float))
    lam_arr = np.atleast_1d(np.asarray(lam, dtype=complex))
    _, a0, a1 = two_soliton_fields(p, x_arr, t)
    poly = lam_arr[None, :] ** 2 + a1[:, None] * lam_arr[None, :] + a0[:, None]
    phase = np.exp(_phase_exponent(lam_arr, x_arr, np.full(x_arr.shape, float(t))))
    return poly * phase


# ---------------------------------------------------------------------------
# Periodicity
# ---------------------------------------------------------------------------

def check_commensurate(data: DiscreteData, tol: float = COMMENSURATE_TOL,
                       max_denominator: int = MAX_DENOMINATOR) -> PeriodReport:
    """
    Decide whether the potential is stationary, periodic or quasiperiodic in t.

    Periodic means rho_k^2 = n_k Omega_0 / 2 + Delta with integers n_k; the
    fundamental period is then 2 pi / Omega_0.
    """
    if not data.is_imaginary(tol):
        raise NotImaginarySpectrum(f"Spectral points with nonzero real part: {data.lambdas}")

    rho = data.lambdas.imag
    energies = rho ** 2
    offset = float(energies[0])

    if data.M == 1:
        logger.info("Single spectral point: stationary potential")
        return PeriodReport("stationary", None, 0.0, (0,), offset, (complex(np.exp(2j * offset)),))

    differences = energies - offset
    reference = differences[1]
    ratios = differences / reference
    fractions = [Fraction(float(r)).limit_denominator(max_denominator) for r in ratios]

    mismatch = max(abs(float(f) - r) / max(1.0, abs(r)) for f, r in zip(fractions, ratios))
    if mismatch > tol:
        logger.info(f"Frequencies incommensurate within tol={tol} (mismatch {mismatch:.2e})")
        return PeriodReport("quasiperiodic", None, 0.0, tuple(), offset, tuple())

    common = reduce(lambda u, v: u * v // math.gcd(u, v), [f.denominator for f in fractions], 1)
    multiples = [int(f.numerator * (common // f.denominator)) for f in fractions]
    divisor = reduce(math.gcd, [abs(m) for m in multiples if m != 0])
    unit = abs(reference) * divisor / common
    integers = tuple(int(round(dk / unit)) for dk in differences)
    frequency = 2.0 * unit
    period = 2.0 * math.pi / frequency
    multipliers = tuple(complex(np.exp(2j * e * period)) for e in energies)

    logger.info(f"Periodic potential: L = {period:.12g}, integers {integers}")
    return PeriodReport("periodic", period, frequency, integers, offset, multipliers)


# ---------------------------------------------------------------------------
# Potential samplers for downstream modules
# ---------------------------------------------------------------------------

PotentialSource = Union[TwoSolitonParams, DiscreteData, None]


def potential_function(source: PotentialSource) -> Callable[[np.ndarray, float], np.ndarray]:
    """V0(x, t) as a vectorized callable; None gives the zero potential."""
    if source is None:
        return lambda x, t: np.zeros(np.shape(x))
    if isinstance(source, TwoSolitonParams):
        return lambda x, t: two_soliton_potential(source, x, t)
    return lambda x, t: eval_potential(source, x, t)


def period_of(source: PotentialSource) -> Optional[float]:
    """Period of V0 in t, None when stationary, quasiperiodic or absent."""
    if source is None:
        return None
    if isinstance(source, TwoSolitonParams):
        return source.period
    return check_commensurate(source).period
