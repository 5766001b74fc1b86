"""
Quadrature helpers: composite Gauss-Legendre panels for the continuum variable,
per-panel Legendre interpolation, and discrete L2 inner products on uniform grids.
"""

import numpy as np
import logging
from dataclasses import dataclass
from typing import Iterable, Optional
from scipy.special import roots_legendre

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PanelRule:
    """Composite Gauss-Legendre rule on a list of breakpoints."""
    breakpoints: np.ndarray
    nodes: np.ndarray
    weights: np.ndarray
    nodes_per_panel: int

    @property
    def n_panels(self) -> int:
        return len(self.breakpoints) - 1

    def panel_nodes(self, i: int) -> np.ndarray:
        k = self.nodes_per_panel
        return self.nodes[i * k:(i + 1) * k]


def composite_gauss(breakpoints: Iterable[float], nodes_per_panel: int) -> PanelRule:
    """
    Build a composite Gauss-Legendre rule with the given panel breakpoints.

    Args:
        breakpoints: strictly increasing panel edges
        nodes_per_panel: Gauss nodes on each panel

    Returns:
        PanelRule with nodes strictly inside each panel
    """
    edges = np.unique(np.asarray(list(breakpoints), dtype=float))
    if len(edges) < 2:
        raise ValueError(f"Need at least two breakpoints, got: {edges}")

    ref_nodes, ref_weights = roots_legendre(nodes_per_panel)
    left, right = edges[:-1], edges[1:]
    half = 0.5 * (right - left)
    mid = 0.5 * (right + left)
    nodes = (mid[:, None] + half[:, None] * ref_nodes[None, :]).ravel()
    weights = (half[:, None] * ref_weights[None, :]).ravel()
    return PanelRule(edges, nodes, weights, nodes_per_panel)


def uniform_panels(a: float, b: float, n_panels: int, nodes_per_panel: int,
                   extra_breaks: Optional[Iterable[float]] = None) -> PanelRule:
    """Equal panels on [a, b], optionally split further at extra breakpoints."""
    edges = list(np.linspace(a, b, n_panels + 1))
    if extra_breaks is not None:
        edges.extend(e for e in extra_breaks if a < e < b)
    return composite_gauss(edges, nodes_per_panel)


def interpolate_on_panels(rule: PanelRule, values: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """
    Evaluate the per-panel Legendre interpolant of nodal values at target points.

    The last axis of `values` runs over the rule's nodes. Targets outside the rule's
    range are clamped to the nearest panel.
    """
    values = np.asarray(values)
    if np.iscomplexobj(values):
        return (interpolate_on_panels(rule, values.real, targets)
                + 1j * interpolate_on_panels(rule, values.imag, targets))
    targets = np.atleast_1d(np.asarray(targets, dtype=float))
    k = rule.nodes_per_panel
    ref_nodes, _ = roots_legendre(k)
    edges = rule.breakpoints

    panel_index = np.clip(np.searchsorted(edges, targets, side="right") - 1, 0, rule.n_panels - 1)
    out_shape = values.shape[:-1] + targets.shape
    result = np.zeros(out_shape, dtype=np.result_type(values, float))

    for i in np.unique(panel_index):
        mask = panel_index == i
        a, b = edges[i], edges[i + 1]
        u = (2.0 * targets[mask] - (a + b)) / (b - a)
        panel_values = values[..., i * k:(i + 1) * k]
        flat = panel_values.reshape(-1, k)
        coeffs = np.polynomial.legendre.legfit(ref_nodes, flat.T, k - 1)
        evaluated = np.polynomial.legendre.legval(u, coeffs)
        result[..., mask] = evaluated.reshape(values.shape[:-1] + (int(mask.sum()),))

    return result


def inner_product(u: np.ndarray, v: np.ndarray, dx: float, axis: int = -1) -> np.ndarray:
    """Discrete <u, v> = dx * sum(conj(u) v), conjugate-linear in the first slot."""
    return dx * np.sum(np.conj(u) * v, axis=axis)


def l2_norm(u: np.ndarray, dx: float) -> float:
    return float(np.sqrt(dx * np.sum(np.abs(u) ** 2)))
