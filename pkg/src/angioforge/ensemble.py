"""Model ensembling, ordinal decoding, and stratified k-fold splitting."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, GridMismatch, UndefinedMetric


@dataclass(frozen=True)
class FoldAssignment:
    """Partition of sample indices into k folds."""

    k: int
    assignment: np.ndarray  # (n,) fold id per sample

    def fold_indices(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == fold)


def ensemble_seg(prob_maps, t: float = 0.5) -> np.ndarray:
    """Per pixel and class, mean probability over models, thresholded at t
    (1 iff mean >= t). Accepts any matching array shapes."""
    maps = [np.asarray(m, dtype=float) for m in prob_maps]
    if not maps:
        raise UndefinedMetric("ensemble_seg needs at least one model output")
    shape = maps[0].shape
    if any(m.shape != shape for m in maps):
        raise GridMismatch("ensemble_seg: model outputs must share a shape")
    mean = np.mean(maps, axis=0)
    return (mean >= t).astype(np.uint8)


def ensemble_reg(outputs) -> np.ndarray:
    """Arithmetic mean of per-sample scalar outputs over models."""
    outs = [np.asarray(o, dtype=float) for o in outputs]
    if not outs:
        raise UndefinedMetric("ensemble_reg needs at least one model output")
    n = outs[0].shape
    if any(o.shape != n for o in outs):
        raise GridMismatch("ensemble_reg: model outputs must share a length")
    return np.mean(outs, axis=0)


def decode_ordinal(score, k: int):
    """Round half away from zero, then clamp to [0, K-1]."""
    if k < 2:
        raise ConfigError("decode_ordinal needs K >= 2")
    s = np.asarray(score, dtype=float)
    rounded = np.sign(s) * np.floor(np.abs(s) + 0.5)
    out = np.clip(rounded, 0, k - 1).astype(np.int64)
    return int(out) if np.isscalar(score) or out.ndim == 0 else out


def stratified_kfold(labels, k: int, seed: int) -> FoldAssignment:
    """Shuffle within each class (seeded), then deal round-robin to folds.

    Per-class fold counts differ by at most one; deterministic per seed.
    """
    y = np.asarray(labels)
    n = len(y)
    if k < 2:
        raise ConfigError("stratified_kfold needs k >= 2")
    if k > n:
        raise ConfigError(f"cannot split {n} samples into {k} folds")
    rng = np.random.default_rng(seed)
    assignment = np.empty(n, dtype=np.int64)
    for cls in np.unique(y):
        idx = np.flatnonzero(y == cls)
        rng.shuffle(idx)
        assignment[idx] = np.arange(len(idx)) % k
    return FoldAssignment(k=k, assignment=assignment)
