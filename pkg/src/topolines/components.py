"""Connected-component labeling and prediction discretization.

Foreground connectivity defaults to 8 (diagonal contact counts): text
strokes are thin, so diagonally touching pixels almost always belong to
the same stroke. Every function takes the connectivity as a parameter.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .validation import check_connectivity, check_mask, check_prob_map

DEFAULT_CONNECTIVITY = 8


def _structure(connectivity: int) -> np.ndarray:
    return ndimage.generate_binary_structure(2, 1 if connectivity == 4 else 2)


def label_components(mask, connectivity: int = DEFAULT_CONNECTIVITY) -> np.ndarray:
    """Label connected foreground components of a binary mask.

    Returns an int32 raster where background is 0 and components carry the
    labels 1..count, assigned in raster-scan first-encounter order so that
    identical inputs always yield identical label rasters.
    """
    mask = check_mask(mask)
    check_connectivity(connectivity)
    labels, count = ndimage.label(mask, structure=_structure(connectivity))
    labels = labels.astype(np.int32, copy=False)
    if count == 0:
        return labels
    return _first_encounter_order(labels, count)


def _first_encounter_order(labels: np.ndarray, count: int) -> np.ndarray:
    # scipy does not guarantee label order; renumber by first appearance.
    flat = labels.ravel()
    nonzero = flat[flat != 0]
    _, first_pos = np.unique(nonzero, return_index=True)
    encounter_rank = np.argsort(first_pos, kind="stable")
    remap = np.zeros(count + 1, dtype=np.int32)
    remap[1:][encounter_rank] = np.arange(1, count + 1, dtype=np.int32)
    return remap[labels]


def count_components(mask, connectivity: int = DEFAULT_CONNECTIVITY) -> int:
    """Number of connected foreground components."""
    mask = check_mask(mask)
    check_connectivity(connectivity)
    _, count = ndimage.label(mask, structure=_structure(connectivity))
    return int(count)


def binarize(probs, threshold: float = 0.5) -> np.ndarray:
    """Discretize a probability map: foreground where value >= threshold."""
    probs = check_prob_map(probs)
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must lie strictly inside (0, 1), got {threshold}")
    return probs >= threshold
