import os
import logging
from typing import Dict, Sequence

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
import seaborn as sns

from config import CHART_COLORS, CHARTS_DIR
from visualizations.potential_plot import save_svg

logger = logging.getLogger(__name__)


def plot_decay_overlay(runs: Dict[float, Dict], parity: str, path: str = None) -> str:
    """
    log|B_b| of each simulated detuning against the predicted line -Gamma t.

    Args:
        runs: epsilon -> {"t": times, "B": complex projections, "Gamma": float}
        parity: channel label for the title
    """
    frames = []
    for eps, run in sorted(runs.items()):
        t = np.asarray(run["t"])
        frames.append(pd.DataFrame({"t": t, "value": np.log(np.abs(run["B"])),
                                    "epsilon": f"{eps:g}", "kind": "simulation"}))
        frames.append(pd.DataFrame({"t": t, "value": -run["Gamma"] * t,
                                    "epsilon": f"{eps:g}", "kind": "prediction"}))
    data = pd.concat(frames, ignore_index=True)

    sns.set_theme(style="whitegrid")
    fig, ax = plt.subplots(figsize=(9, 5))
    sns.lineplot(data=data, x="t", y="value", hue="epsilon", style="kind",
                 dashes={"simulation": "", "prediction": (2, 2)}, ax=ax, estimator=None)
    ax.set_xlabel("t")
    ax.set_ylabel("log |B_b|")
    ax.set_title(f"Bound-state decay, {parity} parity")

    path = path or os.path.join(CHARTS_DIR, f"decay_{parity}.svg")
    save_svg(fig, path)
    logger.info(f"Decay overlay saved as: {path}")
    return path


def plot_phase(runs: Dict[float, Dict], parity: str, path: str = None) -> str:
    """Unwrapped arg B_b against the predicted phase (Lambda - Mbar) t."""
    sns.set_theme(style="whitegrid")
    fig, ax = plt.subplots(figsize=(9, 5))
    palette = sns.color_palette("deep", len(runs))
    for color, (eps, run) in zip(palette, sorted(runs.items())):
        t = np.asarray(run["t"])
        ax.plot(t, np.unwrap(np.angle(run["B"])), color=color, label=f"eps={eps:g}")
        ax.plot(t, run["phase_slope"] * t, color=CHART_COLORS["prediction"], linestyle=":", linewidth=1)
    ax.set_xlabel("t")
    ax.set_ylabel("arg B_b")
    ax.set_title(f"Bound-state phase, {parity} parity")
    ax.legend()

    path = path or os.path.join(CHARTS_DIR, f"phase_{parity}.svg")
    save_svg(fig, path)
    return path


def plot_decay_probe(times: Sequence[float], norms: Dict[str, Sequence[float]],
                     exponents: Dict[str, float], path: str = None) -> str:
    """Weighted local norms on log-log axes with the fitted power laws."""
    sns.set_theme(style="whitegrid")
    fig, ax = plt.subplots(figsize=(7, 5))
    t = np.asarray(times)
    for parity, values in norms.items():
        values = np.asarray(values)
        ax.loglog(t, values, marker="o", linestyle="", label=f"{parity} (slope {exponents[parity]:.2f})")
        ax.loglog(t, values[0] * (t / t[0]) ** exponents[parity], color=CHART_COLORS["prediction"],
                  linestyle=":", linewidth=1)
    ax.set_xlabel("t")
    ax.set_ylabel("weighted norm")
    ax.set_title("Local decay of the continuum part")
    ax.legend()

    path = path or os.path.join(CHARTS_DIR, "decay_probe.svg")
    save_svg(fig, path)
    return path
