"""
Exact eigenbasis of the unperturbed time-periodic problem.

Bound states come from a(x,t,conj(lambda_k)); continuum modes from a(x,t,lambda) with
real lambda, delta-normalized. For the two-soliton family the basis splits into even
and odd channels. Fields are analyzed into mode amplitudes by quadrature, amplitudes
are evolved diagonally by the Floquet generator, and synthesized back.
"""

import numpy as np
import logging
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import List, Optional, Sequence, Union

from config import (MIN_POINTS, SPECTRAL_PANELS, NODES_PER_PANEL, LAMBDA_MAX_FACTOR,
                    RESONANCE_LAMBDA_FACTOR, CONDITION_CEILING, DECAY_WEIGHT_EXPONENT,
                    DECAY_LAMBDA_TAIL, DECAY_NODE_CHUNK, SPECTRAL_TAIL, WIDEN_PANELS,
                    LAMBDA_NYQUIST_FRACTION)
from models.separable_potential import (DiscreteData, TwoSolitonParams, two_soliton_a,
                                        eval_a, eval_bound_generator, check_commensurate)
from utils.errors import GridMismatch, RankDeficient, InsufficientLambdaResolution
from utils.quadrature import (PanelRule, composite_gauss, uniform_panels, interpolate_on_panels,
                              inner_product, l2_norm)

logger = logging.getLogger(__name__)

PARITIES = ("even", "odd", "full")
Source = Union[TwoSolitonParams, DiscreteData]


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform periodic grid x_j = x_min + j dx, j = 0..n_points-1."""
    x_min: float
    x_max: float
    n_points: int

    def __post_init__(self):
        if not self.x_max > self.x_min:
            raise ValueError(f"Need x_max > x_min, got: [{self.x_min}, {self.x_max}]")
        if self.n_points < MIN_POINTS or self.n_points & (self.n_points - 1):
            raise ValueError(f"n_points must be a power of two >= {MIN_POINTS}, got: {self.n_points}")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n_points

    @property
    def x(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n_points)

    @property
    def wavenumbers(self) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.n_points, d=self.dx)

    @property
    def symmetric(self) -> bool:
        return abs(self.x_min + self.x_max) <= 1e-12 * (self.x_max - self.x_min)

    def central(self, fraction: float = 0.5) -> np.ndarray:
        """Mask of nodes in the central `fraction` of the domain."""
        centre = 0.5 * (self.x_min + self.x_max)
        half = 0.5 * fraction * (self.x_max - self.x_min)
        return np.abs(self.x - centre) <= half

    def refined(self) -> "SpatialGrid":
        return SpatialGrid(self.x_min, self.x_max, 2 * self.n_points)


@dataclass(frozen=True)
class SpectralGrid:
    """Composite Gauss-Legendre discretization of the continuum variable."""
    parity: str
    rule: PanelRule
    lambda_max: float

    @property
    def nodes(self) -> np.ndarray:
        return self.rule.nodes

    @property
    def weights(self) -> np.ndarray:
        return self.rule.weights

    @classmethod
    def build(cls, parity: str, lambda_max: float, n_panels: int = SPECTRAL_PANELS,
              nodes_per_panel: int = NODES_PER_PANEL,
              extra_breaks: Optional[Sequence[float]] = None) -> "SpectralGrid":
        if parity not in PARITIES:
            raise ValueError(f"Unknown parity: {parity}")
        if lambda_max <= 0:
            raise ValueError(f"lambda_max must be positive, got: {lambda_max}")
        lower = -lambda_max if parity == "full" else 0.0
        rule = uniform_panels(lower, lambda_max, n_panels, nodes_per_panel, extra_breaks)
        return cls(parity, rule, float(lambda_max))

    def refined(self) -> "SpectralGrid":
        """Twice as many panels over the same range, same extra breakpoints."""
        edges = self.rule.breakpoints
        midpoints = 0.5 * (edges[:-1] + edges[1:])
        rule = composite_gauss(np.concatenate([edges, midpoints]), self.rule.nodes_per_panel)
        return SpectralGrid(self.parity, rule, self.lambda_max)

    def extended(self, n_panels: int = WIDEN_PANELS) -> "SpectralGrid":
        """
        Append n_panels panels as wide as the outermost one (at both ends for the
        full line). Existing nodes and weights are unchanged.
        """
        edges = self.rule.breakpoints
        width = edges[-1] - edges[-2]
        pieces = [edges, edges[-1] + width * np.arange(1, n_panels + 1)]
        if self.parity == "full":
            pieces.insert(0, edges[0] - width * np.arange(n_panels, 0, -1))
        rule = composite_gauss(np.concatenate(pieces), self.rule.nodes_per_panel)
        return SpectralGrid(self.parity, rule, float(pieces[-1][-1]))

    def outer_mass(self, values: np.ndarray) -> float:
        """sum w |values|^2 over the outermost panel (both outer panels for the full line)."""
        k = self.rule.nodes_per_panel
        density = self.weights * np.abs(values) ** 2
        mass = float(np.sum(density[-k:]))
        if self.parity == "full":
            mass += float(np.sum(density[:k]))
        return mass


def default_lambda_max(p: TwoSolitonParams, n_max: Optional[int] = None) -> float:
    """max(4 rho2, 1.5 sqrt(sigma_nmax))."""
    lam = LAMBDA_MAX_FACTOR * p.rho2
    if n_max is not None:
        sigma = float(p.resonance(n_max))
        if sigma > 0:
            lam = max(lam, RESONANCE_LAMBDA_FACTOR * np.sqrt(sigma))
    return lam


@dataclass(frozen=True, eq=False)
class WaveField:
    """Complex samples of a field on a spatial grid at one time."""
    samples: np.ndarray
    grid: SpatialGrid
    time: float = 0.0

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=complex)
        if samples.shape != (self.grid.n_points,):
            raise GridMismatch(f"Field has {samples.shape} samples, grid has {self.grid.n_points}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("Field samples must be finite")
        object.__setattr__(self, "samples", samples)

    def norm(self) -> float:
        return l2_norm(self.samples, self.grid.dx)


@dataclass(frozen=True, eq=False)
class ModeAmplitudes:
    """Bound and sampled continuum amplitudes of a field; basis evaluated at `time`."""
    parity: str
    bound: np.ndarray
    continuum: np.ndarray
    spectral: SpectralGrid
    time: float
    convention: str = "raw"        # raw (B) or floquet (A)

    def parseval(self) -> float:
        """|B_b|^2 + sum_j w_j |B_d(lambda_j)|^2."""
        return float(np.sum(np.abs(self.bound) ** 2)
                     + np.sum(self.spectral.weights * np.abs(self.continuum) ** 2))


# ---------------------------------------------------------------------------
# Two-soliton parity basis
# ---------------------------------------------------------------------------

def _bound_combination(p: TwoSolitonParams, parity: str, y: np.ndarray, t: float) -> np.ndarray:
    """Unnormalized even/odd combination of a(y,t,-i rho_k) for y >= 0."""
    a = two_soliton_a(p, y, t, np.array([-1j * p.rho1, -1j * p.rho2]))
    prefactor = 2.0 / (p.d * np.sqrt(4.0 * p.s))
    if parity == "even":
        return prefactor * (a[:, 1] - a[:, 0])
    return prefactor * (np.sqrt(p.rho1 / p.rho2) * a[:, 1] - np.sqrt(p.rho2 / p.rho1) * a[:, 0])


@lru_cache(maxsize=64)
def bound_normalization(p: TwoSolitonParams, parity: str) -> float:
    """
    Norm of the displayed bound combination, by trapezoid quadrature on a fine
    half-line grid at t = 0 (the norm is conserved in time).
    """
    step = 0.005 / max(1.0, p.rho2)
    y = np.arange(0.0, 40.0 / p.rho1 + step, step)
    density = np.abs(_bound_combination(p, parity, y, 0.0)) ** 2
    norm_sq = step * (density[0] + 2.0 * np.sum(density[1:]))
    norm = float(np.sqrt(norm_sq))
    logger.debug(f"Bound {parity} combination norm for {p}: {norm:.15f}")
    return norm


def psi_b_parity(p: TwoSolitonParams, parity: str, x: Union[float, np.ndarray], t: float) -> np.ndarray:
    """
    Even or odd bound state, evaluated from |x| and reflected so the parity is exact.
    """
    if parity not in ("even", "odd"):
        raise ValueError(f"Bound parity must be even or odd, got: {parity}")
    x_arr = np.atleast_1d(np.asarray(x, dtype=float))
    values = _bound_combination(p, parity, np.abs(x_arr), t) / bound_normalization(p, parity)
    if parity == "odd":
        values = np.where(x_arr < 0, -values, values)
        values = np.where(x_arr == 0, 0.0, values)
    return complex(values[0]) if np.ndim(x) == 0 else values


def psi_d_parity(p: TwoSolitonParams, parity: str, x: Union[float, np.ndarray], t: float,
                 lam: Union[float, np.ndarray]) -> np.ndarray:
    """
    Even/odd continuum modes (a(x,t,lam) +- a(x,t,-lam)) / sqrt(2 pi (lam^2+rho1^2)(lam^2+rho2^2)).

    Returns:
        array of shape (len(lam), len(x))
    """
    if parity not in ("even", "odd"):
        raise ValueError(f"Continuum parity must be even or odd, got: {parity}")
    lam_arr = np.atleast_1d(np.asarray(lam, dtype=float))
    if np.any(lam_arr < 0):
        raise ValueError("Parity continuum modes are indexed by lambda >= 0")
    x_arr = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.abs(x_arr)

    both = two_soliton_a(p, y, t, np.concatenate([lam_arr, -lam_arr]))
    plus, minus = both[:, :lam_arr.size], both[:, lam_arr.size:]
    norm = np.sqrt(2.0 * np.pi * (lam_arr ** 2 + p.rho1 ** 2) * (lam_arr ** 2 + p.rho2 ** 2))

    if parity == "even":
        values = (plus + minus) / norm[None, :]
    else:
        values = (plus - minus) / norm[None, :]
        values = np.where((x_arr < 0)[:, None], -values, values)
    values = values.T
    if np.ndim(x) == 0 and np.ndim(lam) == 0:
        return complex(values[0, 0])
    return values


def psi_d(source: Source, x: Union[float, np.ndarray], t: float, lam: Union[float, np.ndarray]) -> np.ndarray:
    """
    Full-line continuum mode (pi prod|lam - lambda_k|^2)^{-1/2} a(x,t,lam), shape (len(lam), len(x)).
    """
    lam_arr = np.atleast_1d(np.asarray(lam, dtype=float))
    x_arr = np.atleast_1d(np.asarray(x, dtype=float))
    if isinstance(source, TwoSolitonParams):
        a = two_soliton_a(source, x_arr, t, lam_arr)
        lambdas = np.array([1j * source.rho1, 1j * source.rho2])
    else:
        a = eval_a(source, x_arr, t, lam_arr)
        lambdas = source.lambdas
    weight = np.prod(np.abs(lam_arr[:, None] - lambdas[None, :]) ** 2, axis=1)
    values = (a / np.sqrt(np.pi * weight)[None, :]).T
    if np.ndim(x) == 0 and np.ndim(lam) == 0:
        return complex(values[0, 0])
    return values


# ---------------------------------------------------------------------------
# General bound basis
# ---------------------------------------------------------------------------

def bound_basis(data: DiscreteData, t: float, grid: SpatialGrid) -> np.ndarray:
    """
    Orthonormal bound functions on the grid by Gram-Schmidt over a(x,t,conj(lambda_k))
    in the listed order.

    Returns:
        array of shape (M, n_points)
    """
    generators = np.array([eval_bound_generator(data, k, grid.x, t) for k in range(data.M)])
    gram = grid.dx * (np.conj(generators) @ generators.T)
    condition = float(np.linalg.cond(gram))
    if not np.isfinite(condition) or condition > CONDITION_CEILING:
        raise RankDeficient(f"Bound Gram matrix condition {condition:.3e} at t={t}")

    basis = []
    for vector in generators:
        v = vector.astype(complex)
        for q in basis:
            v = v - inner_product(q, v, grid.dx) * q
        v = v / np.sqrt(inner_product(v, v, grid.dx).real)
        basis.append(v)
    return np.array(basis)


# ---------------------------------------------------------------------------
# Basis context
# ---------------------------------------------------------------------------

class BasisContext:
    """Bound and continuum eigenfunctions for one potential and parity channel."""

    def __init__(self, source: Source, parity: str = "full"):
        if parity not in PARITIES:
            raise ValueError(f"Unknown parity: {parity}")
        if isinstance(source, DiscreteData) and parity != "full":
            raise ValueError("Parity channels are available for the two-soliton family only")
        self.source = source
        self.parity = parity

        if isinstance(source, TwoSolitonParams):
            self.beta = source.beta
            self.period = source.period
        else:
            report = check_commensurate(source)
            self.beta = report.offset
            self.period = report.period

    @property
    def n_bound(self) -> int:
        if isinstance(self.source, TwoSolitonParams):
            return 2 if self.parity == "full" else 1
        return self.source.M

    def bound(self, grid: SpatialGrid, t: float) -> np.ndarray:
        """Bound functions on the grid, shape (n_bound, n_points)."""
        if isinstance(self.source, TwoSolitonParams):
            channels = ("even", "odd") if self.parity == "full" else (self.parity,)
            return np.array([psi_b_parity(self.source, c, grid.x, t) for c in channels])
        return bound_basis(self.source, t, grid)

    def continuum(self, x: np.ndarray, t: float, lam: np.ndarray) -> np.ndarray:
        """Continuum modes at the given nodes, shape (len(lam), len(x))."""
        if self.parity == "full":
            return psi_d(self.source, x, t, lam)
        return psi_d_parity(self.source, self.parity, x, t, lam)

    def check_grids(self, grid: SpatialGrid, spectral: SpectralGrid) -> None:
        if spectral.parity != self.parity:
            raise GridMismatch(f"Spectral grid parity {spectral.parity} does not match basis parity {self.parity}")
        if self.parity != "full" and not grid.symmetric:
            raise GridMismatch(f"Parity channel {self.parity} needs a grid symmetric about 0")


def _project_continuum(f: WaveField, context: BasisContext, lam: np.ndarray) -> np.ndarray:
    modes = context.continuum(f.grid.x, f.time, lam)
    return inner_product(modes, f.samples[None, :], f.grid.dx)


def widen_to_tail(f: WaveField, context: BasisContext, spectral: SpectralGrid,
                  continuum: np.ndarray, tail: float = SPECTRAL_TAIL):
    """
    Extend the spectral range until the outermost panel carries at most `tail` of
    ||f||^2, or until lambda_max reaches LAMBDA_NYQUIST_FRACTION of the grid's
    Nyquist value pi / (2 dx).

    Returns:
        (spectral grid, continuum amplitudes on its nodes, whether the tail criterion holds)
    """
    total = f.norm() ** 2
    cap = LAMBDA_NYQUIST_FRACTION * np.pi / (2.0 * f.grid.dx)
    while total > 0 and spectral.outer_mass(continuum) > tail * total:
        if spectral.lambda_max >= cap:
            logger.warning(f"Outer panel at lambda_max={spectral.lambda_max:.3f} still holds "
                           f"{spectral.outer_mass(continuum) / total:.2e} of the norm; limited by the grid spacing")
            return spectral, continuum, False
        wider = spectral.extended(WIDEN_PANELS)
        added = WIDEN_PANELS * spectral.rule.nodes_per_panel
        pieces = [continuum, _project_continuum(f, context, wider.nodes[-added:])]
        if spectral.parity == "full":
            pieces.insert(0, _project_continuum(f, context, wider.nodes[:added]))
        spectral, continuum = wider, np.concatenate(pieces)
        logger.debug(f"Spectral range widened to lambda_max={spectral.lambda_max:.3f}")
    return spectral, continuum, True


def analyze(f: WaveField, context: BasisContext, spectral: SpectralGrid,
            widen: bool = True) -> ModeAmplitudes:
    """
    Project a field onto the basis at the field's time.

    With `widen` the spectral range grows past spectral.lambda_max until the
    neglected continuum mass is below SPECTRAL_TAIL; the returned amplitudes carry
    the grid actually used.

    Returns:
        raw amplitudes B_b = <Psi_b, f>, B_d(lambda_j) = <Psi_d(lambda_j), f>
    """
    try:
        context.check_grids(f.grid, spectral)
        bound = context.bound(f.grid, f.time)
        B_b = inner_product(bound, f.samples[None, :], f.grid.dx)
        B_d = _project_continuum(f, context, spectral.nodes)
        if widen:
            spectral, B_d, _ = widen_to_tail(f, context, spectral, B_d)
        return ModeAmplitudes(context.parity, B_b, B_d, spectral, f.time, "raw")

    except GridMismatch:
        raise
    except Exception as e:
        logger.error(f"Error analyzing field: {e}")
        raise


def synthesize(amps: ModeAmplitudes, context: BasisContext, grid: SpatialGrid) -> WaveField:
    """Superpose the modes at the amplitudes' basis time."""
    raw = to_raw(amps, context)
    bound = context.bound(grid, raw.time)
    modes = context.continuum(grid.x, raw.time, raw.spectral.nodes)
    samples = raw.bound @ bound + (raw.spectral.weights * raw.continuum) @ modes
    return WaveField(samples, grid, raw.time)


def to_floquet(amps: ModeAmplitudes, context: BasisContext) -> ModeAmplitudes:
    """A_b = B_b e^{2i beta t}, A_d = B_d e^{-2i lambda^2 t}."""
    if amps.convention == "floquet":
        return amps
    t = amps.time
    lam = amps.spectral.nodes
    return replace(amps, bound=amps.bound * np.exp(2j * context.beta * t),
                   continuum=amps.continuum * np.exp(-2j * lam ** 2 * t), convention="floquet")


def to_raw(amps: ModeAmplitudes, context: BasisContext) -> ModeAmplitudes:
    if amps.convention == "raw":
        return amps
    t = amps.time
    lam = amps.spectral.nodes
    return replace(amps, bound=amps.bound * np.exp(-2j * context.beta * t),
                   continuum=amps.continuum * np.exp(2j * lam ** 2 * t), convention="raw")


def propagate_free(amps: ModeAmplitudes, dt: float, beta: float) -> ModeAmplitudes:
    """
    Apply e^{-i dt B}: bound phases e^{2i beta dt}, continuum phases e^{-2i lambda^2 dt}.
    """
    if amps.convention != "floquet":
        raise ValueError("propagate_free expects Floquet (A) amplitudes")
    lam = amps.spectral.nodes
    return replace(amps, bound=amps.bound * np.exp(2j * beta * dt),
                   continuum=amps.continuum * np.exp(-2j * lam ** 2 * dt))


def continuum_projection(f: WaveField, context: BasisContext) -> WaveField:
    """P_c f = f - sum_b <Psi_b, f> Psi_b."""
    bound = context.bound(f.grid, f.time)
    coefficients = inner_product(bound, f.samples[None, :], f.grid.dx)
    return WaveField(f.samples - coefficients @ bound, f.grid, f.time)


def _probe_grid(parity: str, lambda_max: float, t_max: float, x_extent: float) -> SpectralGrid:
    """Panels narrow enough to resolve e^{-2i lambda^2 t} at the latest probe time."""
    nodes = NODES_PER_PANEL
    width = nodes / (4.0 * lambda_max * t_max + 2.0 * x_extent)
    n_panels = max(SPECTRAL_PANELS, int(np.ceil(lambda_max / width)))
    return SpectralGrid.build(parity, lambda_max, n_panels=n_panels, nodes_per_panel=nodes)


def local_decay_probe(f: WaveField, context: BasisContext, times: Sequence[float],
                      sigma: float = DECAY_WEIGHT_EXPONENT,
                      spectral: Optional[SpectralGrid] = None,
                      probe_fraction: float = 0.5) -> List[float]:
    """
    Weighted norms ||<x>^{-sigma} e^{-itB} P_c f|| at the requested times.

    Without `spectral` the lambda range starts at 4 rho2 and widens until the last
    panel holds at most DECAY_LAMBDA_TAIL of the norm; a given grid is used as is.
    The continuum amplitudes are interpolated onto panels fine enough for the
    latest time and resynthesized block by block on the central part of the grid.

    Raises:
        InsufficientLambdaResolution: when the outer panel still carries more than
            DECAY_LAMBDA_TAIL of the norm
    """
    if context.parity == "full":
        raise ValueError("The decay probe works in one parity channel")

    projected = continuum_projection(f, context)
    total = projected.norm() ** 2

    coarse = spectral or SpectralGrid.build(context.parity, LAMBDA_MAX_FACTOR * context.source.rho2)
    coarse_amps = analyze(projected, context, coarse, widen=False)
    continuum = coarse_amps.continuum
    if spectral is None:
        coarse, continuum, _ = widen_to_tail(projected, context, coarse, continuum, tail=DECAY_LAMBDA_TAIL)

    tail = coarse.outer_mass(continuum)
    if total > 0 and tail > DECAY_LAMBDA_TAIL * total:
        raise InsufficientLambdaResolution(
            f"Panel at lambda_max={coarse.lambda_max:.3f} carries {tail / total:.2e} of the norm")

    times = np.asarray(list(times), dtype=float)
    mask = f.grid.central(probe_fraction)
    x_probe = f.grid.x[mask]
    extent = float(np.max(np.abs(x_probe)))
    fine = _probe_grid(context.parity, coarse.lambda_max, float(np.max(np.abs(times))), extent)

    raw = ModeAmplitudes(context.parity, coarse_amps.bound, interpolate_on_panels(coarse.rule, continuum, fine.nodes),
                         fine, projected.time, "raw")
    floquet = to_floquet(raw, context)
    weight = (1.0 + x_probe ** 2) ** (-sigma)
    dx = f.grid.dx

    # e^{-itB} acts on the basis time's modes through the raw amplitudes
    coefficients = np.array([fine.weights * to_raw(propagate_free(floquet, t, context.beta), context).continuum
                             for t in times])
    fields = np.zeros((times.size, x_probe.size), dtype=complex)
    for start in range(0, fine.nodes.size, DECAY_NODE_CHUNK):
        block = slice(start, start + DECAY_NODE_CHUNK)
        modes = context.continuum(x_probe, projected.time, fine.nodes[block])
        fields += coefficients[:, block] @ modes

    norms = [float(np.sqrt(dx * np.sum(weight * np.abs(field) ** 2))) for field in fields]
    for t, value in zip(times, norms):
        logger.debug(f"Decay probe t={t:.3f}: {value:.4e}")
    logger.info(f"Decay probe over {len(times)} times with {fine.nodes.size} continuum nodes "
                f"up to lambda={coarse.lambda_max:.3f}")
    return norms
