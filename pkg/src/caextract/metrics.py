"""Classification accuracy and areal-extent measures."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from caextract.raster import LabelGrid

EXHAUSTIVE_ALIGN_MAX = 8


class UndefinedKappaError(ZeroDivisionError):
    """Chance agreement is 1, so kappa has no value."""


@dataclass
class ConfusionMatrix:
    """Rows are reference classes, columns predicted classes."""

    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise ValueError(f"confusion matrix must be square, got {counts.shape}")
        if np.any(counts < 0):
            raise ValueError("counts must be nonnegative")
        self.counts = counts.astype(np.int64)

    @property
    def k(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def to_list(self) -> list[list[int]]:
        return self.counts.tolist()


def _as_cm(cm) -> ConfusionMatrix:
    return cm if isinstance(cm, ConfusionMatrix) else ConfusionMatrix(cm)


def kappa(cm) -> float:
    """Cohen's kappa ``(p_o - p_e) / (1 - p_e)``."""
    cm = _as_cm(cm)
    total = cm.total
    if total <= 0:
        raise ValueError("confusion matrix is empty")
    c = cm.counts
    p_o = np.trace(c) / total
    p_e = float((c.sum(1) * c.sum(0)).sum()) / total ** 2
    if p_e >= 1.0:
        raise UndefinedKappaError("all mass in one reference-and-predicted class")
    return float((p_o - p_e) / (1.0 - p_e))


def overall_accuracy(cm) -> float:
    """Percentage of pixels on the diagonal."""
    cm = _as_cm(cm)
    if cm.total <= 0:
        raise ValueError("confusion matrix is empty")
    return 100.0 * np.trace(cm.counts) / cm.total


def areal_extent(obj_or_area, pixel_size: float) -> float:
    """Ground area in km^2 from a pixel count (or anything with ``area_px``)."""
    if pixel_size <= 0:
        raise ValueError("pixel_size must be positive")
    area_px = getattr(obj_or_area, "area_px", obj_or_area)
    return area_px * pixel_size ** 2 / 1e6


def best_alignment(counts: np.ndarray) -> np.ndarray:
    """Permutation ``perm`` (predicted -> reference) maximizing the trace.

    Exhaustive for up to 8 classes (first permutation wins ties), Hungarian
    assignment above that.
    """
    k = counts.shape[0]
    if k <= EXHAUSTIVE_ALIGN_MAX:
        best, best_trace = None, -1
        for perm in itertools.permutations(range(k)):
            tr = sum(counts[perm[p], p] for p in range(k))
            if tr > best_trace:
                best, best_trace = perm, tr
        return np.array(best)
    rows, cols = linear_sum_assignment(-counts)
    perm = np.empty(k, dtype=np.int64)
    perm[cols] = rows
    return perm


def _labels(grid) -> np.ndarray:
    return grid.labels if isinstance(grid, LabelGrid) else np.asarray(grid)


def confusion_from_masks(reference, predicted, k: int | None = None,
                         align: bool = False) -> ConfusionMatrix:
    """Count ``(reference, predicted)`` label pairs over all pixels.

    Args:
        reference: reference labels.
        predicted: predicted labels.
        k: class count; defaults to the largest label seen plus one.
        align: relabel predictions by the trace-maximizing permutation,
            for unsupervised outputs whose ids are arbitrary.
    """
    ref = _labels(reference).astype(np.int64)
    pred = _labels(predicted).astype(np.int64)
    if ref.shape != pred.shape:
        raise ValueError(f"shape mismatch: {ref.shape} vs {pred.shape}")
    if k is None:
        k = int(max(ref.max(initial=0), pred.max(initial=0))) + 1
        for g in (reference, predicted):
            if isinstance(g, LabelGrid):
                k = max(k, g.k)
    counts = np.zeros((k, k), dtype=np.int64)
    np.add.at(counts, (ref.ravel(), pred.ravel()), 1)
    if align:
        perm = best_alignment(counts)
        counts = counts[:, np.argsort(perm)]
    return ConfusionMatrix(counts)


def agreement_up_to_permutation(reference, predicted) -> float:
    """Fraction of pixels that agree after the best relabeling."""
    cm = confusion_from_masks(reference, predicted, align=True)
    return float(np.trace(cm.counts) / cm.total)
