"""Evaluation metrics: pixel IoU, line-level matching, baseline F-measure.

Degenerate conventions hold throughout: a ratio whose denominator is 0
scores 0 when the other side is non-empty and 1 when both sides are
empty, so reports never contain NaN.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from .baselines import Polyline
from .validation import check_label_map, check_mask, check_same_shape

DEFAULT_MATCH_THRESHOLD = 0.75
DEFAULT_BASELINE_TOLERANCE = 20.0


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def confusion_counts(y, y_hat) -> ConfusionCounts:
    y = check_mask(y, "ground truth")
    y_hat = check_mask(y_hat, "prediction")
    check_same_shape(y, y_hat, "ground truth", "prediction")
    tp = int((y & y_hat).sum())
    fp = int((~y & y_hat).sum())
    fn = int((y & ~y_hat).sum())
    return ConfusionCounts(tp=tp, fp=fp, fn=fn, tn=y.size - tp - fp - fn)


def pixel_iou(y, y_hat) -> float:
    """TP / (TP + FP + FN); 1.0 when both masks are empty."""
    c = confusion_counts(y, y_hat)
    denom = c.tp + c.fp + c.fn
    return 1.0 if denom == 0 else c.tp / denom


def match_score(a, b) -> float:
    """Jaccard overlap |A & B| / |A | B| of two pixel sets (boolean masks)."""
    a = check_mask(a, "first component")
    b = check_mask(b, "second component")
    check_same_shape(a, b, "first component", "second component")
    union = int((a | b).sum())
    if union == 0:
        raise ValueError("match score is undefined for two empty components")
    return int((a & b).sum()) / union


def _pair_table(gt: np.ndarray, pred: np.ndarray):
    """Intersection counts of co-occurring (gt, pred) component pairs."""
    gt_ids, gt_sizes = np.unique(gt[gt > 0], return_counts=True)
    pred_ids, pred_sizes = np.unique(pred[pred > 0], return_counts=True)
    both = (gt > 0) & (pred > 0)
    if both.any():
        stride = int(pred.max()) + 1
        codes = gt[both].astype(np.int64) * stride + pred[both]
        uniq, inter = np.unique(codes, return_counts=True)
        pairs = [
            (int(code // stride), int(code % stride), int(n))
            for code, n in zip(uniq, inter)
        ]
    else:
        pairs = []
    gt_size = dict(zip(gt_ids.tolist(), gt_sizes.tolist()))
    pred_size = dict(zip(pred_ids.tolist(), pred_sizes.tolist()))
    return pairs, gt_size, pred_size


def _greedy_one_to_one(candidates):
    """Assign (gt, pred) pairs by descending score; ties break on labels."""
    chosen = []
    used_gt, used_pred = set(), set()
    for score, g, p in sorted(candidates, key=lambda c: (-c[0], c[1], c[2])):
        if g in used_gt or p in used_pred:
            continue
        used_gt.add(g)
        used_pred.add(p)
        chosen.append((g, p, score))
    return chosen


@dataclass(frozen=True)
class LineMatchReport:
    """One-to-one component matching and the derived rate metrics."""

    matches: tuple[tuple[int, int, float], ...]
    n_matched: int
    n_gt: int
    n_pred: int
    dr: float
    ra: float
    fm: float


def line_match_metrics(
    gt, pred, threshold: float = DEFAULT_MATCH_THRESHOLD
) -> LineMatchReport:
    """Detection rate, recognition accuracy and their harmonic mean.

    Component pairs whose Jaccard overlap reaches ``threshold`` are
    candidate matches; a greedy descending-score pass makes the assignment
    one-to-one. DR = matches / gt lines, RA = matches / predicted lines.
    """
    gt = check_label_map(gt, "ground truth labels")
    pred = check_label_map(pred, "predicted labels")
    check_same_shape(gt, pred, "ground truth labels", "predicted labels")
    pairs, gt_size, pred_size = _pair_table(gt, pred)

    candidates = []
    for g, p, inter in pairs:
        union = gt_size[g] + pred_size[p] - inter
        score = inter / union
        if score >= threshold:
            candidates.append((score, g, p))
    matches = _greedy_one_to_one(candidates)

    m, n1, n2 = len(matches), len(gt_size), len(pred_size)
    dr = m / n1 if n1 else 0.0
    ra = m / n2 if n2 else 0.0
    fm = 2.0 * dr * ra / (dr + ra) if dr + ra else 0.0
    return LineMatchReport(
        matches=tuple((g, p, s) for g, p, s in matches),
        n_matched=m,
        n_gt=n1,
        n_pred=n2,
        dr=dr,
        ra=ra,
        fm=fm,
    )


def line_iou(gt, pred, threshold: float = DEFAULT_MATCH_THRESHOLD) -> float:
    """Line-level IoU: matched lines over matched + unmatched on both sides.

    A pair matches when both its pixel precision and recall reach
    ``threshold``; assignment is greedy by descending min(precision,
    recall). Returns 1.0 when both label maps are empty.
    """
    gt = check_label_map(gt, "ground truth labels")
    pred = check_label_map(pred, "predicted labels")
    check_same_shape(gt, pred, "ground truth labels", "predicted labels")
    pairs, gt_size, pred_size = _pair_table(gt, pred)

    candidates = []
    for g, p, inter in pairs:
        precision = inter / pred_size[p]
        recall = inter / gt_size[g]
        if precision >= threshold and recall >= threshold:
            candidates.append((min(precision, recall), g, p))
    m = len(_greedy_one_to_one(candidates))

    n1, n2 = len(gt_size), len(pred_size)
    denom = n1 + n2 - m
    return 1.0 if denom == 0 else m / denom


@dataclass(frozen=True)
class BaselineEvalReport:
    """Point-coverage precision/recall between two sets of polylines."""

    precision: float
    recall: float
    f1: float
    assignments: tuple[tuple[int, int, float], ...]
    covered_gt: int
    total_gt: int
    covered_pred: int
    total_pred: int
    tolerance: float


def baseline_fmeasure(
    gt: Sequence[Polyline],
    pred: Sequence[Polyline],
    tolerance: float = DEFAULT_BASELINE_TOLERANCE,
) -> BaselineEvalReport:
    """Precision/recall/F1 of predicted baselines against ground truth.

    Both sets are resampled to unit-spaced points. Polylines are paired
    one-to-one by greedy mutual point coverage; a point counts as covered
    when it lies within ``tolerance`` of its pair's chain. Points of
    unpaired polylines are uncovered.
    """
    if tolerance <= 0:
        raise ValueError(f"tolerance must be > 0, got {tolerance}")
    gt_pts = [line.resample(1.0) for line in gt]
    pred_pts = [line.resample(1.0) for line in pred]
    total_gt = sum(len(p) for p in gt_pts)
    total_pred = sum(len(p) for p in pred_pts)

    if not gt_pts and not pred_pts:
        return BaselineEvalReport(1.0, 1.0, 1.0, (), 0, 0, 0, 0, tolerance)

    gt_trees = [cKDTree(p) for p in gt_pts]
    pred_trees = [cKDTree(p) for p in pred_pts]

    candidates = []
    coverage = {}
    for gi in range(len(gt_pts)):
        for pi in range(len(pred_pts)):
            cov_gt = int((pred_trees[pi].query(gt_pts[gi])[0] <= tolerance).sum())
            cov_pred = int((gt_trees[gi].query(pred_pts[pi])[0] <= tolerance).sum())
            score = (cov_gt + cov_pred) / (len(gt_pts[gi]) + len(pred_pts[pi]))
            if score > 0:
                candidates.append((score, gi, pi))
                coverage[(gi, pi)] = (cov_gt, cov_pred)
    assignments = _greedy_one_to_one(candidates)

    covered_gt = sum(coverage[(g, p)][0] for g, p, _ in assignments)
    covered_pred = sum(coverage[(g, p)][1] for g, p, _ in assignments)

    precision = covered_pred / total_pred if total_pred else (1.0 if total_gt == 0 else 0.0)
    recall = covered_gt / total_gt if total_gt else (1.0 if total_pred == 0 else 0.0)
    f1 = 2.0 * precision * recall / (precision + recall) if precision + recall else 0.0
    return BaselineEvalReport(
        precision=precision,
        recall=recall,
        f1=f1,
        assignments=tuple((g, p, s) for g, p, s in assignments),
        covered_gt=covered_gt,
        total_gt=total_gt,
        covered_pred=covered_pred,
        total_pred=total_pred,
        tolerance=tolerance,
    )
