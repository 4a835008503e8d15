"""Render regret curves and sweep summaries to figure files."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .harness import ResultTable, SweepTable

__all__ = ["render_regret_curves", "render_sweep"]


def render_regret_curves(table: ResultTable, path, title: str | None = None) -> None:
    """One line per algorithm with a shaded standard-error band.

    The output format follows the file extension (.svg, .png, .pdf).
    """
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for alg, data in table.series.items():
        ax.plot(table.rounds, data["mean"], label=alg, linewidth=1.6)
        ax.fill_between(
            table.rounds,
            data["mean"] - data["stderr"],
            data["mean"] + data["stderr"],
            alpha=0.2,
        )
    ax.set_xlabel("round")
    ax.set_ylabel("cumulative regret")
    if title:
        ax.set_title(title)
    ax.legend(frameon=False)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def render_sweep(sweep: SweepTable, path, title: str | None = None) -> None:
    """Final regret against the prior-shift level c, one series per algorithm."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    algorithms = sweep.tables[sweep.c_values[0]].algorithms
    for alg in algorithms:
        y = [sweep.tables[c].series[alg]["mean"][-1] for c in sweep.c_values]
        err = [sweep.tables[c].series[alg]["stderr"][-1] for c in sweep.c_values]
        ax.errorbar(sweep.c_values, y, yerr=err, marker="o", capsize=3, label=alg)
    ax.set_xlabel("prior shift c")
    ax.set_ylabel("final cumulative regret")
    if title:
        ax.set_title(title)
    ax.legend(frameon=False)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
