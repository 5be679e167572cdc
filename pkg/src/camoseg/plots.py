"""Figure rendering for evaluation reports and training logs.

Every writer takes data plus a destination path and renders a PNG next to
the corresponding CSV, using the non-interactive backend so headless runs
work.
"""

import csv
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .metrics import DEFAULT_CONFIG


def plot_pr_curve(report, path, label=None):
    precision, recall = report.pr
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.plot(recall, precision, "-", lw=2, label=label or "model")
    ax.set_xlabel("Recall")
    ax.set_ylabel("Precision")
    ax.set_xlim(0, 1.0)
    ax.set_ylim(0, 1.02)
    ax.grid(True, ls=":", alpha=0.5)
    ax.legend(loc="lower left")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def plot_threshold_curves(report, path, label=None):
    taus = DEFAULT_CONFIG.thresholds
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    axes[0].plot(taus, report.f_curve, "-", lw=2, label=label or "model")
    axes[0].set_xlabel("Threshold")
    axes[0].set_ylabel("F-measure")
    axes[1].plot(taus, report.e_curve, "-", lw=2, label=label or "model")
    axes[1].set_xlabel("Threshold")
    axes[1].set_ylabel("E-measure")
    for ax in axes:
        ax.set_xlim(0, 1.0)
        ax.set_ylim(0, 1.02)
        ax.grid(True, ls=":", alpha=0.5)
        ax.legend(loc="lower left")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def plot_loss_history(history, path):
    """``history`` is rows of (step, edge, det1..det4, total, lr) or a loss CSV path."""
    if isinstance(history, (str, Path)):
        with open(history) as fh:
            reader = csv.reader(fh)
            next(reader)
            history = [tuple(float(v) for v in row) for row in reader]
    if not history:
        raise ValueError("empty loss history")
    arr = np.asarray(history, dtype=np.float64)
    steps = arr[:, 0]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(steps, arr[:, 6], "-", lw=2, label="total")
    ax.plot(steps, arr[:, 1], "--", lw=1, label="edge")
    for i in range(4):
        ax.plot(steps, arr[:, 2 + i], ":", lw=1, label=f"det{i + 1}")
    ax.set_xlabel("Step")
    ax.set_ylabel("Loss")
    ax.grid(True, ls=":", alpha=0.5)
    ax.legend(ncol=3, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)
