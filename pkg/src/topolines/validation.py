"""Input validation helpers shared across the package.

All raster types are plain 2-D numpy arrays: boolean masks (foreground =
True), probability maps (float64 in [0, 1]) and label maps (non-negative
integers, 0 = background). The helpers below coerce and validate them the
way scikit-learn's ``check_array`` does for tabular data.
"""

from __future__ import annotations

import numpy as np

VALID_CONNECTIVITIES = (4, 8)


def check_mask(mask, name: str = "mask") -> np.ndarray:
    """Validate a binary raster and return it as a 2-D boolean array."""
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-D array, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError(f"{name} must not be empty")
    if arr.dtype == bool:
        return arr
    if np.issubdtype(arr.dtype, np.integer):
        if np.isin(arr, (0, 1)).all():
            return arr.astype(bool)
    raise ValueError(f"{name} must be boolean or 0/1-valued, got dtype {arr.dtype}")


def check_prob_map(probs, name: str = "prediction") -> np.ndarray:
    """Validate a probability raster: 2-D, finite, every value in [0, 1]."""
    arr = np.asarray(probs, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-D array, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError(f"{name} must not be empty")
    if np.isnan(arr).any():
        raise ValueError(f"{name} contains NaN values")
    lo, hi = float(arr.min()), float(arr.max())
    if lo < 0.0 or hi > 1.0:
        raise ValueError(f"{name} values must lie in [0, 1], got range [{lo}, {hi}]")
    return arr


def check_label_map(labels, name: str = "labels") -> np.ndarray:
    """Validate a component label raster (non-negative integers, 0 = background)."""
    arr = np.asarray(labels)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-D array, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError(f"{name} must not be empty")
    if not np.issubdtype(arr.dtype, np.integer):
        raise ValueError(f"{name} must be an integer array, got dtype {arr.dtype}")
    if arr.min() < 0:
        raise ValueError(f"{name} must not contain negative labels")
    return arr


def check_same_shape(a: np.ndarray, b: np.ndarray, a_name: str, b_name: str) -> None:
    if a.shape != b.shape:
        raise ValueError(
            f"{a_name} shape {a.shape} does not match {b_name} shape {b.shape}"
        )


def check_connectivity(connectivity: int) -> int:
    if connectivity not in VALID_CONNECTIVITIES:
        raise ValueError(
            f"connectivity must be one of {VALID_CONNECTIVITIES}, got {connectivity!r}"
        )
    return connectivity
