"""Independent reference implementations used only by the tests.

These deliberately avoid the library's code paths: labeling by explicit
flood fill, matching by exhaustive search, loss terms by math.fsum loops.
"""

from __future__ import annotations

import math

import numpy as np

_OFFSETS = {
    4: ((-1, 0), (1, 0), (0, -1), (0, 1)),
    8: tuple((dr, dc) for dr in (-1, 0, 1) for dc in (-1, 0, 1) if (dr, dc) != (0, 0)),
}


def flood_fill_label(mask: np.ndarray, connectivity: int) -> tuple[np.ndarray, int]:
    """Stack-based flood fill, seeding in raster-scan order."""
    h, w = mask.shape
    labels = np.zeros((h, w), dtype=np.int32)
    offsets = _OFFSETS[connectivity]
    count = 0
    for r in range(h):
        for c in range(w):
            if not mask[r, c] or labels[r, c]:
                continue
            count += 1
            labels[r, c] = count
            stack = [(r, c)]
            while stack:
                rr, cc = stack.pop()
                for dr, dc in offsets:
                    nr, nc = rr + dr, cc + dc
                    if 0 <= nr < h and 0 <= nc < w and mask[nr, nc] and not labels[nr, nc]:
                        labels[nr, nc] = count
                        stack.append((nr, nc))
    return labels, count


def max_matching_size(pairs: list[tuple[int, int]]) -> int:
    """Maximum-cardinality one-to-one matching by exhaustive search."""
    by_gt: dict[int, list[int]] = {}
    for g, p in pairs:
        by_gt.setdefault(g, []).append(p)
    gt_ids = sorted(by_gt)
    best = 0

    def recurse(i: int, used: set[int], size: int) -> None:
        nonlocal best
        best = max(best, size)
        if i == len(gt_ids) or size + (len(gt_ids) - i) <= best:
            return
        recurse(i + 1, used, size)
        for p in by_gt[gt_ids[i]]:
            if p not in used:
                used.add(p)
                recurse(i + 1, used, size + 1)
                used.remove(p)

    recurse(0, set(), 0)
    return best


def plain_dice(y: np.ndarray, p: np.ndarray, epsilon: float) -> float:
    yl = y.ravel().tolist()
    pl = p.ravel().tolist()
    inter = math.fsum(pv for yv, pv in zip(yl, pl) if yv)
    denom = math.fsum([float(sum(1 for yv in yl if yv)), math.fsum(pl), epsilon])
    if denom == 0.0:
        return 0.0
    return 1.0 - (2.0 * inter + epsilon) / denom


def plain_bce_sum(y: np.ndarray, p: np.ndarray, clamp: float) -> float:
    terms = []
    for yv, pv in zip(y.ravel().tolist(), p.ravel().tolist()):
        pc = min(max(pv, clamp), 1.0 - clamp)
        terms.append(-math.log(pc) if yv else -math.log(1.0 - pc))
    return math.fsum(terms)
