"""
Scenario files: flat `section.key = value` text with `#` comments.

Example:
    potential.kind = two-soliton
    potential.rho1 = 0.25
    potential.rho2 = 0.75
    run.parity = odd
    run.epsilons = 0.04, 0.02, 0.01
"""

import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from config import (DEFAULT_POINTS, DEFAULT_PERIODS, DOMAIN_PRESETS, DEFAULT_DOMAIN,
                    SPECTRAL_PANELS, K_MAX, SPONGE_DAMPING, SPONGE_MARGIN,
                    STEP_TOLERANCE, RECORD_EVERY)
from models.separable_potential import DiscreteData, TwoSolitonParams, PotentialSource
from utils.errors import ScenarioError

logger = logging.getLogger(__name__)

POTENTIAL_KINDS = ("two-soliton", "discrete", "zero")


@dataclass(frozen=True)
class Scenario:
    """One experiment: potential, perturbation sweep, grids, solver and output settings."""
    potential_kind: str = "two-soliton"
    rho1: float = 0.25
    rho2: float = 0.75
    theta1: float = 0.0
    theta2: float = 0.0
    lambdas: Tuple[complex, ...] = ()
    g_vectors: Tuple[Tuple[complex, ...], ...] = ()
    period: Optional[float] = None
    parity: str = "odd"
    epsilons: Tuple[float, ...] = (0.04, 0.02, 0.01)
    n_periods: int = DEFAULT_PERIODS
    frame: str = "perturbation"
    drop_zero_resonance: bool = False
    x_min: Optional[float] = None
    x_max: Optional[float] = None
    n_points: int = DEFAULT_POINTS
    sponge_enabled: bool = True
    sponge_damping: float = SPONGE_DAMPING
    sponge_width: Optional[float] = None
    sponge_margin: float = SPONGE_MARGIN
    spectral_panels: int = SPECTRAL_PANELS
    k_max: int = K_MAX
    step_tolerance: float = STEP_TOLERANCE
    record_every: int = RECORD_EVERY
    dt_max: Optional[float] = None
    dt_min: Optional[float] = None
    output_dir: str = "results"

    def potential(self) -> PotentialSource:
        if self.potential_kind == "two-soliton":
            return TwoSolitonParams(self.rho1, self.rho2, self.theta1, self.theta2)
        if self.potential_kind == "discrete":
            return DiscreteData(np.array(self.lambdas), np.array(self.g_vectors))
        return None

    @property
    def domain(self) -> Tuple[float, float]:
        if self.x_min is not None and self.x_max is not None:
            return self.x_min, self.x_max
        key = (round(self.rho1, 12), round(self.rho2, 12))
        if self.potential_kind == "two-soliton" and key in DOMAIN_PRESETS:
            return DOMAIN_PRESETS[key]
        return DEFAULT_DOMAIN


# key -> (attribute, kind)
KEYS: Dict[str, Tuple[str, str]] = {
    "potential.kind": ("potential_kind", "str"),
    "potential.rho1": ("rho1", "float"),
    "potential.rho2": ("rho2", "float"),
    "potential.theta1": ("theta1", "float"),
    "potential.theta2": ("theta2", "float"),
    "potential.lambdas": ("lambdas", "complex_list"),
    "potential.g": ("g_vectors", "vector_list"),
    "potential.period": ("period", "optional_float"),
    "run.parity": ("parity", "str"),
    "run.epsilons": ("epsilons", "float_list"),
    "run.periods": ("n_periods", "int"),
    "run.frame": ("frame", "str"),
    "run.drop_zero_resonance": ("drop_zero_resonance", "bool"),
    "grid.x_min": ("x_min", "optional_float"),
    "grid.x_max": ("x_max", "optional_float"),
    "grid.points": ("n_points", "int"),
    "sponge.enabled": ("sponge_enabled", "bool"),
    "sponge.damping": ("sponge_damping", "float"),
    "sponge.width": ("sponge_width", "optional_float"),
    "sponge.margin": ("sponge_margin", "float"),
    "spectral.panels": ("spectral_panels", "int"),
    "spectral.k_max": ("k_max", "int"),
    "solver.step_tolerance": ("step_tolerance", "float"),
    "solver.record_every": ("record_every", "int"),
    "solver.dt_max": ("dt_max", "optional_float"),
    "solver.dt_min": ("dt_min", "optional_float"),
    "output.dir": ("output_dir", "str"),
}


def _parse_value(raw: str, kind: str):
    if kind == "str":
        return raw
    if kind == "float":
        return float(raw)
    if kind == "optional_float":
        return None if raw.lower() in ("", "none", "auto") else float(raw)
    if kind == "int":
        return int(raw)
    if kind == "bool":
        lowered = raw.lower()
        if lowered not in ("true", "false", "yes", "no", "1", "0"):
            raise ValueError(f"expected a boolean, got '{raw}'")
        return lowered in ("true", "yes", "1")
    if kind == "float_list":
        return tuple(float(v) for v in raw.split(",") if v.strip())
    if kind == "complex_list":
        return tuple(complex(v.strip().replace(" ", "")) for v in raw.split(",") if v.strip())
    if kind == "vector_list":
        return tuple(tuple(complex(c.strip().replace(" ", "")) for c in vec.split(",") if c.strip())
                     for vec in raw.split(";") if vec.strip())
    raise ValueError(f"unknown value kind {kind}")


def _format_value(value, kind: str) -> str:
    if value is None:
        return "auto"
    if kind == "bool":
        return "true" if value else "false"
    if kind in ("float", "optional_float"):
        return repr(float(value))
    if kind == "float_list":
        return ", ".join(repr(float(v)) for v in value)
    if kind == "complex_list":
        return ", ".join(repr(complex(v)) for v in value)
    if kind == "vector_list":
        return "; ".join(", ".join(repr(complex(c)) for c in vec) for vec in value)
    return str(value)


def validate_scenario(scenario: Scenario, lines: Optional[Dict[str, int]] = None) -> bool:
    """Cross-field checks; errors name the offending key and its line when known."""
    lines = lines or {}

    def fail(key, message):
        raise ScenarioError(message, line=lines.get(key), field=key)

    if scenario.potential_kind not in POTENTIAL_KINDS:
        fail("potential.kind", f"must be one of {POTENTIAL_KINDS}, got '{scenario.potential_kind}'")
    if scenario.parity not in ("even", "odd"):
        fail("run.parity", f"must be even or odd, got '{scenario.parity}'")
    if scenario.frame not in ("perturbation", "laboratory"):
        fail("run.frame", f"must be perturbation or laboratory, got '{scenario.frame}'")
    if any(not eps > -1 for eps in scenario.epsilons):
        fail("run.epsilons", f"every detuning must exceed -1, got {scenario.epsilons}")
    if scenario.n_periods <= 0:
        fail("run.periods", f"must be positive, got {scenario.n_periods}")
    if scenario.n_points < 256 or scenario.n_points & (scenario.n_points - 1):
        fail("grid.points", f"must be a power of two >= 256, got {scenario.n_points}")
    x_min, x_max = scenario.domain
    if not x_max > x_min:
        fail("grid.x_max", f"must exceed grid.x_min, got [{x_min}, {x_max}]")
    if scenario.record_every <= 0:
        fail("solver.record_every", f"must be positive, got {scenario.record_every}")

    try:
        scenario.potential()
    except ValueError as e:
        key = "potential.lambdas" if scenario.potential_kind == "discrete" else "potential.rho2"
        fail(key, str(e))

    return True


def parse_scenario(text: str) -> Scenario:
    """
    Parse scenario text.

    Raises:
        ScenarioError: with line number and key for syntax, unknown keys and bad values
    """
    values = {}
    lines = {}
    for number, line in enumerate(text.splitlines(), start=1):
        content = line.split("#", 1)[0].strip()
        if not content:
            continue
        if "=" not in content:
            raise ScenarioError(f"expected 'key = value', got '{content}'", line=number)
        key, raw = (part.strip() for part in content.split("=", 1))
        if key not in KEYS:
            raise ScenarioError("unknown key", line=number, field=key)
        if key in lines:
            raise ScenarioError(f"duplicate key (first set on line {lines[key]})", line=number, field=key)
        attribute, kind = KEYS[key]
        try:
            values[attribute] = _parse_value(raw, kind)
        except ValueError as e:
            raise ScenarioError(f"invalid value '{raw}': {e}", line=number, field=key)
        lines[key] = number

    scenario = Scenario(**values)
    validate_scenario(scenario, lines)
    return scenario


def load_scenario(path: Optional[str]) -> Scenario:
    """Read a scenario file; None gives the defaults."""
    if path is None:
        return Scenario()
    file = Path(path)
    if not file.exists():
        raise ScenarioError(f"scenario file not found: {file}")
    logger.info(f"Loading scenario {file}")
    return parse_scenario(file.read_text())


def serialize_scenario(scenario: Scenario) -> str:
    """Every key in a fixed order, so parse_scenario(serialize_scenario(s)) == s."""
    lines = []
    for key, (attribute, kind) in KEYS.items():
        lines.append(f"{key} = {_format_value(getattr(scenario, attribute), kind)}")
    return "\n".join(lines) + "\n"


def apply_overrides(scenario: Scenario, epsilons: Optional[Sequence[float]] = None,
                    parity: Optional[str] = None, n_periods: Optional[int] = None,
                    no_sponge: bool = False, output_dir: Optional[str] = None,
                    drop_zero_resonance: bool = False) -> Scenario:
    """CLI flags take precedence over scenario values."""
    changes = {}
    if epsilons:
        changes["epsilons"] = tuple(float(e) for e in epsilons)
    if parity is not None:
        changes["parity"] = parity
    if n_periods is not None:
        changes["n_periods"] = int(n_periods)
    if no_sponge:
        changes["sponge_enabled"] = False
    if output_dir is not None:
        changes["output_dir"] = output_dir
    if drop_zero_resonance:
        changes["drop_zero_resonance"] = True
    updated = replace(scenario, **changes)
    validate_scenario(updated)
    return updated