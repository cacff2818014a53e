"""Matplotlib rendering of report and training figures.

Uses the Agg backend so figure files render in headless runs; every figure
lands next to the delimited report output it illustrates.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .corpus import NUM_GRADES


def render_f1_bars(rows: dict[str, tuple[list[float], float]], path: str | Path) -> Path:
    """Grouped per-grade F1 bars (plus macro) for one or more evaluators.

    ``rows`` maps an evaluator label to (per-class F1 list, macro F1).
    """
    path = Path(path)
    labels = [f"Grade {g}" for g in range(NUM_GRADES)] + ["Macro"]
    x = np.arange(len(labels))
    width = 0.8 / max(len(rows), 1)

    fig, ax = plt.subplots(figsize=(7, 4))
    for offset, (name, (per_class, macro)) in enumerate(rows.items()):
        heights = list(per_class) + [macro]
        ax.bar(x + offset * width, heights, width, label=name)
    ax.set_xticks(x + width * (len(rows) - 1) / 2)
    ax.set_xticklabels(labels)
    ax.set_ylim(0.0, 1.05)
    ax.set_ylabel("F1")
    ax.set_title("Per-grade F1")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_confusion(gold, pred, path: str | Path, num_classes: int = NUM_GRADES) -> Path:
    """Heatmap of gold vs predicted grades."""
    path = Path(path)
    counts = np.zeros((num_classes, num_classes))
    np.add.at(counts, (np.asarray(gold, dtype=int), np.asarray(pred, dtype=int)), 1.0)

    fig, ax = plt.subplots(figsize=(5, 4.5))
    image = ax.imshow(counts, cmap="Blues")
    for i in range(num_classes):
        for j in range(num_classes):
            ax.text(j, i, int(counts[i, j]), ha="center", va="center", fontsize=9)
    ax.set_xlabel("Predicted grade")
    ax.set_ylabel("Gold grade")
    ax.set_xticks(range(num_classes))
    ax.set_yticks(range(num_classes))
    ax.set_title("Grade confusion")
    fig.colorbar(image, ax=ax, shrink=0.8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_loss_curves(logs, path: str | Path) -> Path:
    """Per-epoch classification, contrast, and total loss curves."""
    path = Path(path)
    epochs = [log.epoch for log in logs]

    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(epochs, [log.cls_loss for log in logs], label="classification")
    ax.plot(epochs, [log.ctr_loss for log in logs], label="contrast")
    ax.plot(epochs, [log.total_loss for log in logs], label="total", linewidth=2)
    ax.set_xlabel("Epoch")
    ax.set_ylabel("Loss")
    ax.set_title("Training loss")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
