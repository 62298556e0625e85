"""Report figures (PR curves, loss curves, ablation bars) written to files."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .metrics import MetricReport  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "lines.linewidth": 1.4,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
}


def figsize(scale: float = 1.0, ratio: float | None = None) -> tuple[float, float]:
    width = 4.8 * scale
    ratio = (np.sqrt(5.0) - 1.0) / 2.0 if ratio is None else ratio
    return width, width * ratio


def plot_pr_curves(reports: list[MetricReport], path) -> None:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=figsize(0.8, 1.0))
        for r in reports:
            if len(r.pr):
                ax.plot(r.pr[:, 1], r.pr[:, 0], label=r.name)
        ax.set_xlabel("Recall")
        ax.set_ylabel("Precision")
        ax.set_xlim(0, 1.0)
        ax.set_ylim(0, 1.02)
        ax.grid(alpha=0.3)
        if reports:
            ax.legend(loc="lower left", frameon=False)
        fig.savefig(path)
        plt.close(fig)


def plot_loss_curve(rows, path) -> None:
    """``rows`` are (step, epoch, loss, lr) tuples."""
    rows = list(rows)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=figsize())
        if rows:
            steps = np.array([r[0] for r in rows])
            loss = np.array([r[2] for r in rows])
            ax.plot(steps, loss, color="0.6", lw=0.8, label="step")
            win = max(1, len(loss) // 20)
            if win > 1:
                smooth = np.convolve(loss, np.ones(win) / win, mode="valid")
                ax.plot(steps[win - 1:], smooth, color="C0", label=f"mean of {win}")
            ax.set_yscale("log")
            ax.legend(frameon=False)
        ax.set_xlabel("Step")
        ax.set_ylabel("Loss")
        fig.savefig(path)
        plt.close(fig)


def plot_ablation(summary: dict[str, dict[str, float]], path) -> None:
    names = list(summary)
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 4, figsize=figsize(1.6, 0.3))
        for ax, metric in zip(axes, ("S", "F", "E", "MAE")):
            vals = [summary[n][metric] for n in names]
            ax.bar(range(len(names)), vals, color=[f"C{i}" for i in range(len(names))])
            ax.set_title(metric)
            ax.set_xticks(range(len(names)))
            ax.set_xticklabels(names, rotation=45, ha="right")
        fig.savefig(path)
        plt.close(fig)
