"""Report figures rendered next to the delimited outputs."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .errors import DataError
from .metrics import MetricsReport


def plot_pr_curves(
    curves: dict[str, list[tuple[float, float]]],
    path: str | Path,
    report: MetricsReport | None = None,
) -> Path:
    """One subplot per class with the rank-sweep PR points."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = sorted(curves)
    n = len(names)
    cols = min(3, max(1, n))
    rows = (n + cols - 1) // cols
    fig, axes = plt.subplots(rows, cols, figsize=(4 * cols, 3.2 * rows), squeeze=False)
    ap_by_name = {}
    if report is not None:
        ap_by_name = {c.name: c.ap for c in report.per_class}
    for i, name in enumerate(names):
        ax = axes[i // cols][i % cols]
        pts = curves[name]
        recall = [p[0] for p in pts]
        precision = [p[1] for p in pts]
        ax.plot(recall, precision, marker="o", markersize=3, linewidth=1.2)
        title = name
        ap = ap_by_name.get(name)
        if ap is not None:
            title += f" (AP={ap:.3f})"
        ax.set_title(title, fontsize=10)
        ax.set_xlabel("recall")
        ax.set_ylabel("precision")
        ax.set_xlim(-0.02, 1.02)
        ax.set_ylim(-0.02, 1.02)
        ax.grid(alpha=0.3)
    for j in range(n, rows * cols):
        axes[j // cols][j % cols].axis("off")
    if report is not None:
        fig.suptitle(f"per-class precision-recall (mAP={report.mean_ap:.3f})")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_loss_curve(train_log: str | Path, path: str | Path) -> Path:
    """Loss-vs-step figure from a training log CSV (step, loss, wall_ms)."""
    train_log = Path(train_log)
    if not train_log.is_file():
        raise DataError(f"training log not found: {train_log}")
    steps = []
    losses = []
    with train_log.open("r", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            steps.append(int(row["step"]))
            losses.append(float(row["loss"]))
    if not steps:
        raise DataError(f"{train_log}: no rows to plot")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6, 3.6))
    ax.plot(steps, losses, linewidth=1.0)
    if len(losses) >= 20:
        kernel = np.ones(10) / 10.0
        smooth = np.convolve(losses, kernel, mode="valid")
        ax.plot(steps[9:], smooth, linewidth=1.8, label="10-step mean")
        ax.legend()
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
