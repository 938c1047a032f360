"""Figures written next to the CSV outputs of each command."""

from __future__ import annotations

from contextlib import contextmanager
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 100,
    "savefig.dpi": 150,
    "svg.hashsalt": "ermfg",
}


@contextmanager
def figure(width: float = 5.0, height: float | None = None):
    """Styled figure/axes pair, closed on exit."""
    if height is None:
        height = width * (np.sqrt(5) - 1) / 2
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(width, height))
        try:
            yield fig, ax
        finally:
            plt.close(fig)


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    # fixed metadata keeps the PNG bytes reproducible
    fig.savefig(path, metadata={"Software": None})
    return path


def plot_flow(flow, labels: Sequence[str], path, title: str = "") -> Path:
    """Stacked bars of population share per node at each time step."""
    mus = flow.mus
    t = np.arange(mus.shape[0])
    with figure() as (fig, ax):
        bottom = np.zeros(mus.shape[0])
        for s, label in enumerate(labels):
            ax.bar(t, mus[:, s], bottom=bottom, label=label, width=0.7)
            bottom += mus[:, s]
        ax.set_xlabel("time step")
        ax.set_ylabel("population share")
        ax.set_ylim(0, 1.0)
        ax.set_xticks(t)
        ax.legend(loc="upper left", bbox_to_anchor=(1.0, 1.0), frameon=False)
        if title:
            ax.set_title(title)
        return _save(fig, path)


def plot_residuals(residuals: Sequence[float], path, tol: float | None = None) -> Path:
    res = np.asarray(residuals, dtype=float)
    with figure() as (fig, ax):
        k = np.arange(1, res.size + 1)
        ax.semilogy(k, np.maximum(res, 1e-300), marker=".", lw=1)
        if tol is not None:
            ax.axhline(tol, color="0.5", ls="--", lw=0.8, label="tolerance")
            ax.legend(frameon=False)
        ax.set_xlabel("iteration")
        ax.set_ylabel(r"$d_M(\mu^{k+1}, \mu^k)$")
        return _save(fig, path)


def _reference_line(ax, n, anchor_y, slope=-0.5):
    n = np.asarray(n, dtype=float)
    ax.loglog(n, anchor_y * (n / n[0]) ** slope, color="0.4", ls="--", lw=0.8, label=f"slope {slope}")


def plot_deviation(rows, slope: float | None, path) -> Path:
    """Log-log gain of a unilateral deviator against population size."""
    n = np.array([r[0] for r in rows], dtype=float)
    gain = np.array([r[1] for r in rows], dtype=float)
    err = np.array([r[2] for r in rows], dtype=float)
    with figure() as (fig, ax):
        pos = gain > 0
        ax.errorbar(n[pos], gain[pos], yerr=err[pos], marker="o", ms=3, lw=1, capsize=2, label="gain")
        if pos.any():
            _reference_line(ax, n, gain[pos][0] * (n[0] / n[pos][0]) ** -0.5)
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("number of agents N")
        ax.set_ylabel("deviation gain")
        if slope is not None:
            ax.set_title(f"fitted slope {slope:.2f}")
        ax.legend(frameon=False)
        return _save(fig, path)


def plot_convergence(table, path) -> Path:
    """Mean TV distance to the mean field per time step, log-log in N."""
    with figure() as (fig, ax):
        ts = sorted({r["t"] for r in table.rows})
        n = np.array(sorted({r["N"] for r in table.rows}), dtype=float)
        for t in ts:
            y = table.column("mean_tv", t)
            if np.all(y > 0):
                ax.loglog(n, y, marker=".", lw=1, label=f"t={t}")
        first = [r["mean_tv"] for r in table.rows if r["N"] == n[0] and r["mean_tv"] > 0]
        if first:
            _reference_line(ax, n, max(first))
        ax.set_xlabel("number of agents N")
        ax.set_ylabel(r"$E\, d_{TV}(\mu^N_t, \mu_t)$")
        if np.isfinite(table.slope):
            ax.set_title(f"pooled slope {table.slope:.2f}")
        ax.legend(frameon=False, ncol=2)
        return _save(fig, path)
