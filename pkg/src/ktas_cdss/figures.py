"""Matplotlib figures written next to the evaluation tables."""

from __future__ import annotations

from pathlib import Path
from typing import TYPE_CHECKING

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

if TYPE_CHECKING:
    from .evaluation import ConfusionMatrix, EvalReport

_RC = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "legend.fontsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
    # fixed metadata keeps PNG bytes stable across runs
    "svg.hashsalt": "ktas-cdss",
}


def _save(fig: plt.Figure, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_confusion(matrix: ConfusionMatrix, path: str | Path, title: str = "") -> Path:
    counts = np.array(matrix.counts, dtype=float)
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4.2, 0.45 * len(matrix.row_labels) + 1.4))
        ax.imshow(counts, cmap="Blues", aspect="auto", vmin=0, vmax=max(1.0, counts.max()))
        ax.set_xticks(range(len(matrix.columns)), [str(c) for c in matrix.columns])
        ax.set_yticks(range(len(matrix.row_labels)), matrix.row_labels)
        ax.set_xlabel("KTAS level by expert")
        ax.set_ylabel("Model's KTAS prediction")
        if title:
            ax.set_title(title)
        hi = counts.max() if counts.size else 0
        for i in range(counts.shape[0]):
            for j in range(counts.shape[1]):
                v = int(counts[i, j])
                ax.text(j, i, str(v), ha="center", va="center",
                        color="white" if hi and v > hi / 2 else "black")
        return _save(fig, Path(path))


def plot_scores(report: EvalReport, path: str | Path) -> Path:
    summaries = list(report.five_point.values()) + list(report.one_point.values())
    with plt.rc_context(_RC):
        fig, axes = plt.subplots(1, 2, figsize=(8, 3.2),
                                 gridspec_kw={"width_ratios": [max(1, len(report.five_point)),
                                                               max(1, len(report.one_point))]})
        for ax, scale_summaries, top, label in (
            (axes[0], report.five_point, 5, "5-point scale"),
            (axes[1], report.one_point, 1, "1-point scale"),
        ):
            names = list(scale_summaries)
            means = [float(scale_summaries[k].mean) for k in names]
            ax.bar(range(len(names)), means, color="#4c72b0")
            ax.set_xticks(range(len(names)), [n.replace("_", "\n") for n in names])
            ax.set_ylim(0, top * 1.05)
            ax.set_title(label)
            for i, m in enumerate(means):
                ax.text(i, m, f"{m:.3f}", ha="center", va="bottom", fontsize=7)
        fig.suptitle(f"Mean expert scores ({report.mode.value}-agent, n={summaries[0].n if summaries else 0})")
        return _save(fig, Path(path))


def plot_comparison(multi: EvalReport, single: EvalReport, path: str | Path) -> Path:
    labels = ["accuracy", "over-triage", "under-triage", "decisiveness"]
    mvals = [float(multi.metrics.accuracy), float(multi.metrics.over_rate),
             float(multi.metrics.under_rate), float(multi.metrics.decisiveness)]
    svals = [float(single.metrics.accuracy), float(single.metrics.over_rate),
             float(single.metrics.under_rate), float(single.metrics.decisiveness)]
    x = np.arange(len(labels))
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5.5, 3.2))
        ax.bar(x - 0.2, mvals, 0.4, label="multi-agent", color="#4c72b0")
        ax.bar(x + 0.2, svals, 0.4, label="single-agent", color="#dd8452")
        ax.set_xticks(x, labels)
        ax.set_ylim(0, 1.05)
        ax.set_ylabel("rate")
        ax.legend(frameon=False)
        return _save(fig, Path(path))
