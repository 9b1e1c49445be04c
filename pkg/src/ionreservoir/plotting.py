"""PNG figures drawn from experiment columns.

Rendering uses the non-interactive Agg backend so it works headless.
Figures are a convenience next to the CSV; nothing reads them back.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (7.0, 3.6),
    "figure.dpi": 110,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "lines.linewidth": 1.0,
    "font.size": 10,
    "legend.frameon": False,
}


def _finish(fig, ax, path, xlabel, ylabel, title):
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    if ax.get_legend_handles_labels()[0]:
        ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return Path(path)


def plot_coherence(columns: dict, path, title: str = "", time_unit: str = "") -> Path:
    """R(t) with any companion curves (``R_*`` columns) and a stderr band."""
    t = np.asarray(columns["t"])
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        if "R" in columns:
            ax.plot(t, columns["R"], color="C0", label="R")
        for i, (name, y) in enumerate((k, v) for k, v in columns.items() if k.startswith("R_")):
            ax.plot(t, y, color=f"C{i + 1}", lw=0.9, ls="--" if name == "R_diagonal" else "-", label=name)
        if "stderr" in columns:
            centre = columns["R"] if "R" in columns else columns.get("R_ensemble")
            if centre is not None:
                err = 3 * np.asarray(columns["stderr"])
                ax.fill_between(t, centre - err, centre + err, color="C0", alpha=0.2, lw=0, label="3 stderr")
        return _finish(fig, ax, path, f"t [({time_unit})^-1]" if time_unit else "t", "|<g|rho|e>|", title)


def plot_rates(columns: dict, path, title: str = "") -> Path:
    """Fitted rate ratios against n^2 + n + 1."""
    n = np.asarray(columns["n"])
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.8, 3.6))
        ax.plot(n, columns["expected_ratio"], "o", mfc="none", color="C1", label="n^2 + n + 1")
        ratio = np.asarray(columns["ratio_to_n0"])
        if np.any(np.isfinite(ratio)):
            ax.plot(n, ratio, "x", color="C0", label="fitted / fitted(n=0)")
        ax.set_xticks(n)
        return _finish(fig, ax, path, "Fock level n", "rate ratio", title)


def plot_outcome(experiment: str, columns: dict, path, time_unit: str = "") -> Path:
    if experiment == "rates":
        return plot_rates(columns, path, title="dephasing rate per Fock level")
    return plot_coherence(columns, path, title=experiment, time_unit=time_unit)
