"""Matplotlib rendering of group-rate and confusion reports to image files."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .evaluation import ConfusionMatrix, GroupRates

_DPI = 150


def save_group_rates_figure(
    rates: GroupRates,
    path: str | Path,
    human: dict[str, float] | None = None,
    title: str | None = None,
):
    """Bar chart of per-group accuracy, optionally against human rates."""
    names = [name for name, _, _, _ in rates.rows]
    machine = [acc for _, _, acc, _ in rates.rows]
    x = np.arange(len(names))
    fig, ax = plt.subplots(figsize=(max(4.0, 1.2 * len(names) + 2.0), 3.6))
    if human:
        width = 0.38
        ax.bar(x - width / 2, machine, width, label="machine", color="#3465a4")
        human_vals = [human.get(n, np.nan) for n in names]
        ax.bar(x + width / 2, human_vals, width, label="human", color="#cc7a29")
        ax.legend(frameon=False)
    else:
        ax.bar(x, machine, 0.6, color="#3465a4")
    ax.set_xticks(x)
    ax.set_xticklabels(names, rotation=30, ha="right")
    ax.set_ylabel("recognition rate (%)")
    ax.set_ylim(0, 100)
    ax.set_title(title or f"recognition rate by {rates.grouping}")
    ax.spines["top"].set_visible(False)
    ax.spines["right"].set_visible(False)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def save_confusion_figure(matrix: ConfusionMatrix, path: str | Path, title: str | None = None):
    """Annotated heatmap of row-normalized confusion percents."""
    n = len(matrix.labels)
    fig, ax = plt.subplots(figsize=(1.0 + 0.8 * n, 0.9 + 0.8 * n))
    im = ax.imshow(matrix.percents, cmap="Blues", vmin=0, vmax=100)
    ax.set_xticks(range(n))
    ax.set_yticks(range(n))
    ax.set_xticklabels(matrix.labels, rotation=30, ha="right")
    ax.set_yticklabels(matrix.labels)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    for i in range(n):
        for j in range(n):
            v = matrix.percents[i, j]
            ax.text(
                j, i, f"{v:.1f}",
                ha="center", va="center", fontsize=8,
                color="white" if v > 55 else "black",
            )
    fig.colorbar(im, ax=ax, shrink=0.8, label="%")
    ax.set_title(title or "confusion matrix")
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
