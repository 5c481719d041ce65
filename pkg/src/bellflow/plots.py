"""SVG figures for the command-line sweeps, drawn with matplotlib.

Text is kept as SVG text rather than glyph paths so that labels stay
searchable.  Non-finite points leave gaps in a curve.
"""

from __future__ import annotations

import io
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_STYLE = {"svg.fonttype": "none", "svg.hashsalt": "bellflow", "figure.figsize": (7.0, 4.6)}


def _svg(fig) -> str:
    buf = io.StringIO()
    fig.savefig(buf, format="svg", bbox_inches="tight", metadata={"Date": None})
    plt.close(fig)
    return buf.getvalue()


def line_plot(series: Sequence[tuple[str, Sequence[float], Sequence[float]]], xlabel: str, ylabel: str,
              title: str = "", xlog: bool = False, hlines: Sequence[tuple[float, str]] = (),
              vlines: Sequence[tuple[float, str]] = (), dashed: Sequence[bool] | None = None) -> str:
    """SVG text of labelled curves ``(label, x, y)`` with optional reference lines."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        for k, (label, x, y) in enumerate(series):
            ls = "--" if dashed and dashed[k] else "-"
            ax.plot(np.asarray(x, float), np.asarray(y, float), ls, label=label)
        for val, label in hlines:
            ax.axhline(val, color="k", ls=":", lw=1)
            ax.annotate(label, (1.0, val), xycoords=("axes fraction", "data"), xytext=(4, 0),
                        textcoords="offset points", va="center", fontsize=9)
        for val, label in vlines:
            if np.isfinite(val) and (val > 0 or not xlog):
                ax.axvline(val, color="0.4", ls="-.", lw=1)
                ax.annotate(label, (val, 1.0), xycoords=("data", "axes fraction"), xytext=(3, -12),
                            textcoords="offset points", fontsize=9)
        if xlog:
            ax.set_xscale("log")
        ax.set(xlabel=xlabel, ylabel=ylabel, title=title)
        if series:
            ax.legend(fontsize=8, loc="center left", bbox_to_anchor=(1.12, 0.5))
        return _svg(fig)


def heatmap(x: Sequence[float], y: Sequence[float], Z: np.ndarray, xlabel: str, ylabel: str,
            title: str = "", cbar_label: str = "") -> str:
    """SVG text of ``Z[i, j]`` at ``(x[j], y[i])``; NaN cells are drawn grey."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        cmap = plt.get_cmap("viridis").with_extremes(bad="0.75")
        mesh = ax.pcolormesh(np.asarray(x, float), np.asarray(y, float), np.ma.masked_invalid(Z),
                             shading="nearest", cmap=cmap)
        fig.colorbar(mesh, ax=ax, label=cbar_label)
        ax.set(xlabel=xlabel, ylabel=ylabel, title=title)
        return _svg(fig)
