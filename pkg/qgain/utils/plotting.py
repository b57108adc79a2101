"""SVG line plots of figure tables (matplotlib, Agg backend)."""

import io
import logging
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import matplotlib

matplotlib.use("Agg")

import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402
from matplotlib.figure import Figure  # noqa: E402

from .result_formatter import atomic_write_bytes  # noqa: E402

logger = logging.getLogger(__name__)

matplotlib.rcParams.update({
    "svg.hashsalt": "qgain",
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
})


def _new_axes(xlabel: str, ylabel: str, logx: bool = False, logy: bool = False):
    fig = Figure(figsize=(5.5, 3.8))
    ax = fig.add_subplot(1, 1, 1)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if logx:
        ax.set_xscale("log")
    if logy:
        ax.set_yscale("log")
    return fig, ax


def save_svg(fig: Figure, path: Union[str, Path]) -> Path:
    buffer = io.BytesIO()
    fig.tight_layout()
    fig.savefig(buffer, format="svg", metadata={"Date": None})
    return atomic_write_bytes(path, buffer.getvalue())


def _grouped_lines(ax, table: pd.DataFrame, x: str, y: str, by: Sequence[str], style: str = "-o", prefix: str = ""):
    groups = table.groupby(list(by), sort=True) if by else [((), table)]
    for key, group in groups:
        key = key if isinstance(key, tuple) else (key,)
        label = ", ".join(f"{name}={value}" for name, value in zip(by, key)) or y
        ax.plot(group[x], group[y], style, label=prefix + label, markersize=3)


def figure_for_table(name: str, table: pd.DataFrame) -> Figure:
    """Build the line plot matching a figure table's layout."""
    if name == "fig1":
        fig, ax = _new_axes("λ", "φ̄∞(σ̄*)/λ", logx=True)
        for column in table.columns:
            if column != "lambda":
                ax.plot(table["lambda"], table[column], "-", label=column)
        ax.axhline(0.5, color="gray", linestyle=":", linewidth=0.8)
    elif name == "fig2":
        fig, ax = _new_axes("λ", "σ̄*", logx=True, logy=True)
        _grouped_lines(ax, table, "lambda", "sigma_bar_star", ["scheme", "N"])
    elif name == "fig3":
        fig, ax = _new_axes("θ", "σ*")
        _grouped_lines(ax, table, "theta", "sigma_star", ["scheme", "lambda"])
    elif name in ("fig5_6", "custom_sweep"):
        fig, ax = _new_axes("σ̄ / σ̄*", "normalized quality gain", logx=True)
        for key, group in table.groupby(["spectrum", "N", "c_m"], sort=True):
            label = f"{key[0]} N={key[1]} c_m={key[2]:g}"
            line = ax.plot(group["multiplier"], group["median"], "-o", markersize=3, label=label)[0]
            ax.fill_between(group["multiplier"], group["q10"], group["q90"], color=line.get_color(), alpha=0.2)
            ax.plot(group["multiplier"], group["phi_hat"], "--", color=line.get_color(), linewidth=0.8)
    elif name == "prop4":
        fig, ax = _new_axes("N", "condition term", logx=True, logy=True)
        ax.plot(table["N"], table["lambda_sq_d1"], "-o", markersize=3, label="λ²·d₁(Â)")
        ax.plot(table["N"], table["lipschitz_term"], "-s", markersize=3, label="Lipschitz term")
    elif name == "bound_check":
        fig, ax = _new_axes("σ̄ / σ̄*", "|φ̄ - φ̂| and bound", logx=True, logy=True)
        _grouped_lines(ax, table, "multiplier", "lhs", ["c_m"], prefix="|φ̄ - φ̂| ")
        _grouped_lines(ax, table, "multiplier", "rhs", ["c_m"], style="--", prefix="bound ")
    else:
        raise ValueError(f"no plot layout for {name!r}")
    ax.legend(fontsize=7)
    return fig


def plot_table(name: str, table: pd.DataFrame, path: Union[str, Path]) -> Path:
    """Render ``table`` as an SVG next to its CSV."""
    path = save_svg(figure_for_table(name, table), path)
    logger.info(f"📈 Wrote {path}")
    return path


def quality_gain_figure(
    sigma_bars: np.ndarray,
    curves: Iterable[tuple],
    sigma_bar_star: Optional[float] = None,
    band: Optional[tuple] = None,
) -> Figure:
    """
    φ curves against σ̄ for the explorer.

    Args:
        sigma_bars: x values
        curves: (label, y values) pairs
        sigma_bar_star: Draws a vertical marker when given
        band: (lower, upper) arrays shaded around the first curve
    """
    fig, ax = _new_axes("σ̄", "normalized quality gain")
    for label, values in curves:
        ax.plot(sigma_bars, values, label=label)
    if band is not None:
        ax.fill_between(sigma_bars, band[0], band[1], alpha=0.2, label="error bound")
    if sigma_bar_star is not None:
        ax.axvline(sigma_bar_star, color="gray", linestyle=":", label="σ̄*")
    ax.axhline(0.0, color="black", linewidth=0.5)
    ax.legend(fontsize=7)
    return fig
