import os
import logging

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
import seaborn as sns

from config import CHARTS_DIR, SVG_HASH_SALT

logger = logging.getLogger(__name__)


def save_svg(fig, path: str) -> str:
    """Write an SVG that is byte-identical across runs."""
    directory = os.path.dirname(path) or "."
    os.makedirs(directory, exist_ok=True)
    with matplotlib.rc_context({"svg.hashsalt": SVG_HASH_SALT}):
        fig.savefig(path, format="svg", metadata={"Date": None}, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_potential_heatmap(x, times, values, title: str = "V0(x, t) over one period",
                           path: str = None) -> str:
    """
    Heatmap of the potential with x across and t down.

    Args:
        x: spatial samples
        times: time samples over one period
        values: array of shape (len(times), len(x))
        path: output file, default charts/potential.svg
    """
    try:
        values = np.asarray(values)
        if values.shape != (len(times), len(x)):
            raise ValueError(f"Expected values of shape {(len(times), len(x))}, got: {values.shape}")

        sns.set_theme(style="white")
        fig, ax = plt.subplots(figsize=(9, 5))
        mesh = ax.pcolormesh(x, times, values, cmap="mako", shading="auto", rasterized=False)
        fig.colorbar(mesh, ax=ax, label="V0")
        ax.set_xlabel("x")
        ax.set_ylabel("t")
        ax.set_title(title)

        path = path or os.path.join(CHARTS_DIR, "potential.svg")
        save_svg(fig, path)
        logger.info(f"Potential heatmap saved as: {path}")
        return path

    except Exception as e:
        logger.error(f"Error plotting potential heatmap: {e}")
        raise
