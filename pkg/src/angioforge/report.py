"""Figure rendering for the evaluation reports.

Every report command writes a PNG next to its CSV so results can be eyed
without loading the numbers.
"""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .metrics import MetricReport


def save_seg_figure(report: MetricReport, path) -> None:
    classes = list(report.classes)
    x = np.arange(len(classes))
    width = 0.38
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(
        x - width / 2,
        [report.dice_mean[c] for c in classes],
        width,
        yerr=[report.dice_se[c] for c in classes],
        capsize=3,
        label="DSC",
    )
    ax.bar(
        x + width / 2,
        [report.iou_mean[c] for c in classes],
        width,
        yerr=[report.iou_se[c] for c in classes],
        capsize=3,
        label="IoU",
    )
    ax.axhline(report.mdsc, color="gray", linestyle="--", linewidth=1, label=f"mDSC {report.mdsc:.3f}")
    ax.set_xticks(x, classes)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("score")
    ax.set_title("Segmentation scores per class")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_grade_figure(confusion: np.ndarray, per_class_auc, qwk: float, auc: float, path) -> None:
    k = confusion.shape[0]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 4))
    im = ax1.imshow(confusion, cmap="Blues")
    for i in range(k):
        for j in range(k):
            ax1.text(j, i, str(confusion[i, j]), ha="center", va="center", fontsize=9)
    ax1.set_xlabel("predicted")
    ax1.set_ylabel("true")
    ax1.set_title(f"Confusion (QWK {qwk:.3f})")
    fig.colorbar(im, ax=ax1, fraction=0.046)
    vals = [v if v is not None else 0.0 for v in per_class_auc]
    bars = ax2.bar(np.arange(k), vals)
    for c, v in enumerate(per_class_auc):
        if v is None:
            bars[c].set_color("lightgray")
    ax2.axhline(auc, color="gray", linestyle="--", linewidth=1, label=f"macro AUC {auc:.3f}")
    ax2.set_ylim(0, 1.05)
    ax2.set_xlabel("class")
    ax2.set_ylabel("one-vs-rest AUC")
    ax2.set_title("AUC per class")
    ax2.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_fold_figure(counts: dict[int, dict], path) -> None:
    """Stacked per-fold class histogram; ``counts[fold][class] = n``."""
    folds = sorted(counts)
    classes = sorted({c for per in counts.values() for c in per})
    bottom = np.zeros(len(folds))
    fig, ax = plt.subplots(figsize=(6, 4))
    for cls in classes:
        heights = np.array([counts[f].get(cls, 0) for f in folds], dtype=float)
        ax.bar([str(f) for f in folds], heights, bottom=bottom, label=f"class {cls}")
        bottom += heights
    ax.set_xlabel("fold")
    ax.set_ylabel("samples")
    ax.set_title("Stratified fold composition")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
