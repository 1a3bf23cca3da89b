"""Figure rendering for training histories and convergence curves."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["save_history_figure", "save_convergence_figure"]

_TASK_LABELS = ("displacement", "derivative", "material")


def save_history_figure(history, path) -> None:
    """Two panels: task losses on a log scale and the task weights."""
    epochs = [row.epoch for row in history]
    losses = np.array([row.losses for row in history])
    weights = np.array([row.weights for row in history])
    fig, (ax_loss, ax_weight) = plt.subplots(1, 2, figsize=(9.0, 3.4))
    for i, label in enumerate(_TASK_LABELS):
        positive = losses[:, i] > 0.0
        if positive.any():
            ax_loss.semilogy(np.array(epochs)[positive], losses[positive, i], label=label)
        ax_weight.plot(epochs, weights[:, i], label=label)
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("task loss")
    ax_loss.legend(fontsize=8)
    ax_weight.set_xlabel("epoch")
    ax_weight.set_ylabel("task weight")
    ax_weight.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_convergence_figure(rows, path) -> None:
    """Mean H1 error with one-sigma band per element order, log-log axes."""
    fig, ax = plt.subplots(figsize=(5.4, 3.8))
    orders = sorted({row["order"] for row in rows if row.get("status", "ok") == "ok"})
    for order in orders:
        group = sorted(
            (row for row in rows if row["order"] == order and row.get("status", "ok") == "ok"),
            key=lambda row: row["elems_per_edge"],
        )
        if not group:
            continue
        elems = np.array([row["elems_per_edge"] for row in group], dtype=float)
        mean = np.array([row["h1_mean"] for row in group])
        std = np.array([row["h1_std"] for row in group])
        ax.errorbar(elems, mean, yerr=std, marker="o", capsize=3, label=f"order {order}")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("elements per edge")
    ax.set_ylabel("H1 error (mean over test samples)")
    ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
