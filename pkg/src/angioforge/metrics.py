"""Scores and losses: DSC, IoU, QWK, one-vs-rest AUC, and the training
losses (soft Dice, channel-wise BCE, MSE) with analytic gradients."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .errors import GridMismatch, UndefinedMetric

logger = logging.getLogger(__name__)


def _as_binary(a) -> np.ndarray:
    return np.asarray(a).astype(bool)


def dice(pred, gt) -> float:
    """2|P & G| / (|P| + |G|); both empty -> 1.0."""
    p = _as_binary(pred)
    g = _as_binary(gt)
    if p.shape != g.shape:
        raise GridMismatch("dice: shape mismatch")
    denom = p.sum() + g.sum()
    if denom == 0:
        return 1.0
    return 2.0 * np.logical_and(p, g).sum() / denom


def iou(pred, gt) -> float:
    """|P & G| / |P | G|; both empty -> 1.0."""
    p = _as_binary(pred)
    g = _as_binary(gt)
    if p.shape != g.shape:
        raise GridMismatch("iou: shape mismatch")
    union = np.logical_or(p, g).sum()
    if union == 0:
        return 1.0
    return np.logical_and(p, g).sum() / union


def confusion_matrix(gt_labels, pred_labels, k: int) -> np.ndarray:
    """K x K counts; rows are ground truth, columns are predictions."""
    g = np.asarray(gt_labels, dtype=np.int64)
    p = np.asarray(pred_labels, dtype=np.int64)
    if g.shape != p.shape:
        raise GridMismatch("confusion_matrix: length mismatch")
    if np.any((g < 0) | (g >= k)) or np.any((p < 0) | (p >= k)):
        raise UndefinedMetric(f"labels must lie in [0, {k})")
    cm = np.zeros((k, k), dtype=np.int64)
    np.add.at(cm, (g, p), 1)
    return cm


def qwk(gt_labels, pred_labels, k: int) -> float:
    """Quadratic weighted kappa with w_ij = (i - j)^2 / (K - 1)^2.

    kappa = 1 - sum(w * O) / sum(w * E), E being the outer product of the
    marginals scaled to the sample count; a zero denominator (e.g. both
    sides constant) counts as perfect agreement by convention.
    """
    if k < 2:
        raise UndefinedMetric("qwk needs K >= 2")
    g = np.asarray(gt_labels, dtype=np.int64)
    p = np.asarray(pred_labels, dtype=np.int64)
    if len(g) != len(p):
        raise GridMismatch("qwk: length mismatch")
    if len(g) == 0:
        raise UndefinedMetric("qwk needs at least one sample")
    obs = confusion_matrix(g, p, k).astype(float)
    n = obs.sum()
    expected = np.outer(obs.sum(axis=1), obs.sum(axis=0)) / n
    ii, jj = np.meshgrid(np.arange(k), np.arange(k), indexing="ij")
    w = (ii - jj) ** 2 / (k - 1) ** 2
    denom = float((w * expected).sum())
    if denom == 0.0:
        return 1.0
    return 1.0 - float((w * obs).sum()) / denom


def binary_auc(scores, positives) -> float:
    """Rank (Mann-Whitney) AUC with ties counted 0.5."""
    s = np.asarray(scores, dtype=float)
    pos = np.asarray(positives, dtype=bool)
    n_pos = int(pos.sum())
    n_neg = len(pos) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetric("binary_auc needs at least one positive and one negative")
    ranks = rankdata(s, method="average")
    return (ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def auc_ovr_per_class(scores, gt_labels, k: int) -> list[float | None]:
    """One-vs-rest AUC per class; None where a class lacks positives or
    negatives."""
    s = np.asarray(scores, dtype=float)
    g = np.asarray(gt_labels, dtype=np.int64)
    if s.ndim != 2 or s.shape[1] != k:
        raise GridMismatch(f"scores must be (n, {k})")
    if s.shape[0] != len(g):
        raise GridMismatch("auc: length mismatch")
    out: list[float | None] = []
    for c in range(k):
        pos = g == c
        if pos.all() or not pos.any():
            out.append(None)
        else:
            out.append(binary_auc(s[:, c], pos))
    return out


def auc_ovr(scores, gt_labels, k: int) -> float:
    """Macro average of the per-class one-vs-rest AUCs; skipped classes are
    logged. Raises when every class is skipped."""
    per_class = auc_ovr_per_class(scores, gt_labels, k)
    skipped = [c for c, v in enumerate(per_class) if v is None]
    if skipped:
        logger.warning("auc_ovr: skipping classes without both outcomes: %s", skipped)
    kept = [v for v in per_class if v is not None]
    if not kept:
        raise UndefinedMetric("auc_ovr: no class has both positives and negatives")
    return float(np.mean(kept))


def soft_dice_loss(pred_probs, gt, eps: float = 1.0):
    """Per channel 1 - (2 sum(p g) + eps) / (sum p + sum g + eps), averaged
    over channels; returns (loss, analytic gradient w.r.t. pred)."""
    p = np.asarray(pred_probs, dtype=float)
    g = np.asarray(gt, dtype=float)
    if p.shape != g.shape:
        raise GridMismatch("soft_dice_loss: shape mismatch")
    if p.ndim < 3:
        p3 = p[None, ...]
        g3 = g[None, ...]
    else:
        p3 = p
        g3 = g
    c = p3.shape[0]
    axes = tuple(range(1, p3.ndim))
    inter = (p3 * g3).sum(axis=axes)
    total = p3.sum(axis=axes) + g3.sum(axis=axes)
    frac = (2.0 * inter + eps) / (total + eps)
    loss = float(np.mean(1.0 - frac))
    grad = -(2.0 * g3 * (total + eps).reshape((c,) + (1,) * (p3.ndim - 1))
             - (2.0 * inter + eps).reshape((c,) + (1,) * (p3.ndim - 1)))
    grad /= ((total + eps) ** 2).reshape((c,) + (1,) * (p3.ndim - 1))
    grad /= c
    return loss, grad.reshape(p.shape)


def bce_loss(pred_probs, gt, eps: float = 1e-7):
    """Mean of -[g ln p + (1-g) ln(1-p)] with p clamped to [eps, 1-eps]."""
    p = np.asarray(pred_probs, dtype=float)
    g = np.asarray(gt, dtype=float)
    if p.shape != g.shape:
        raise GridMismatch("bce_loss: shape mismatch")
    pc = np.clip(p, eps, 1.0 - eps)
    loss = float(np.mean(-(g * np.log(pc) + (1.0 - g) * np.log(1.0 - pc))))
    grad = (pc - g) / (pc * (1.0 - pc)) / p.size
    grad = np.where((p > eps) & (p < 1.0 - eps), grad, 0.0)  # clamp kills the slope
    return loss, grad


def mse_loss(pred, gt):
    """Mean of (p - g)^2; gradient 2 (p - g) / n."""
    p = np.asarray(pred, dtype=float)
    g = np.asarray(gt, dtype=float)
    if p.shape != g.shape:
        raise GridMismatch("mse_loss: length mismatch")
    diff = p - g
    return float(np.mean(diff**2)), 2.0 * diff / p.size


def mean_and_se(values) -> tuple[float, float]:
    """Mean and standard error (sample stddev / sqrt(n)); SE = 0 for n = 1."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise UndefinedMetric("mean_and_se needs at least one value")
    if v.size == 1:
        return float(v[0]), 0.0
    return float(v.mean()), float(v.std(ddof=1) / np.sqrt(v.size))


@dataclass
class MetricReport:
    """Per-class and aggregate scores with mean and standard error."""

    classes: tuple[str, ...] = ()
    dice_mean: dict = field(default_factory=dict)
    dice_se: dict = field(default_factory=dict)
    iou_mean: dict = field(default_factory=dict)
    iou_se: dict = field(default_factory=dict)
    n_images: dict = field(default_factory=dict)
    mdsc: float = float("nan")
    mdsc_se: float = 0.0
    miou: float = float("nan")
    miou_se: float = 0.0
    qwk: float | None = None
    auc: float | None = None
    auc_per_class: list = field(default_factory=list)

    def to_csv(self) -> str:
        lines = ["class,dice_mean,dice_se,iou_mean,iou_se,n_images"]
        for c in self.classes:
            lines.append(
                f"{c},{self.dice_mean[c]:.6f},{self.dice_se[c]:.6f},"
                f"{self.iou_mean[c]:.6f},{self.iou_se[c]:.6f},{self.n_images[c]}"
            )
        lines.append(
            f"mean,{self.mdsc:.6f},{self.mdsc_se:.6f},{self.miou:.6f},{self.miou_se:.6f},"
            f"{sum(self.n_images.values())}"
        )
        return "\n".join(lines) + "\n"


def seg_report(preds, gts, class_names: tuple[str, ...] = ("irma", "na", "nv")) -> MetricReport:
    """Per-class dice/IoU averaged over images whose ground truth contains
    the class; the aggregate row is the mean of the per-class means with a
    propagated standard error."""
    preds = list(preds)
    gts = list(gts)
    if not preds or len(preds) != len(gts):
        raise UndefinedMetric("seg_report needs matched, non-empty prediction and GT lists")
    c = len(class_names)
    per_class_dice: list[list[float]] = [[] for _ in range(c)]
    per_class_iou: list[list[float]] = [[] for _ in range(c)]
    for p, g in zip(preds, gts):
        p = np.asarray(p)
        g = np.asarray(g)
        if p.shape != g.shape or p.shape[0] != c:
            raise GridMismatch(f"seg_report expects matching ({c}, H, W) masks")
        for ci in range(c):
            if not np.any(g[ci]):
                continue  # class absent in GT: image does not enter this average
            per_class_dice[ci].append(dice(p[ci], g[ci]))
            per_class_iou[ci].append(iou(p[ci], g[ci]))
    report = MetricReport(classes=tuple(class_names))
    class_means_d, class_means_i, ses_d, ses_i = [], [], [], []
    for ci, name in enumerate(class_names):
        if per_class_dice[ci]:
            dm, dse = mean_and_se(per_class_dice[ci])
            im, ise = mean_and_se(per_class_iou[ci])
            report.n_images[name] = len(per_class_dice[ci])
            class_means_d.append(dm)
            class_means_i.append(im)
            ses_d.append(dse)
            ses_i.append(ise)
        else:
            dm = dse = im = ise = float("nan")
            report.n_images[name] = 0
        report.dice_mean[name] = dm
        report.dice_se[name] = dse
        report.iou_mean[name] = im
        report.iou_se[name] = ise
    if class_means_d:
        report.mdsc = float(np.mean(class_means_d))
        report.miou = float(np.mean(class_means_i))
        report.mdsc_se = float(np.sqrt(np.sum(np.square(ses_d))) / len(ses_d))
        report.miou_se = float(np.sqrt(np.sum(np.square(ses_i))) / len(ses_i))
    return report
