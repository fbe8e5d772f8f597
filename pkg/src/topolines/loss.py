"""Connectivity-aware segmentation loss with analytic gradients.

The loss combines three ingredients:

* a Dice overlap term over the whole image,
* a pixel-level binary cross-entropy term, and
* component-level cross-entropy terms restricted to the error regions
  that change the number of connected components of the binarized
  prediction: false-positive components that bridge distinct target
  lines ("merge" errors) and false-negative components that fragment a
  target line ("split" errors).

``alpha`` trades the dense pixel term against the component terms;
``beta`` trades merge penalties against split penalties. The total is

    dice + (structure_weight / n_pixels) *
        ((1 - alpha) * pixel_bce
         + alpha * ((1 - beta) * merge_bce + beta * split_bce))

where each cross-entropy term is summed (not averaged) over its pixel
set. Component membership is discrete and therefore carries no gradient;
``gradient`` treats the selection as a constant (callers that iterate
should refresh the selection periodically, see ``topolines.repair``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .components import DEFAULT_CONNECTIVITY, binarize, count_components, label_components
from .validation import (
    check_connectivity,
    check_mask,
    check_prob_map,
    check_same_shape,
)


@dataclass(frozen=True)
class ComponentSelection:
    """Error components whose removal/addition changes the component count.

    Pixel sets are sorted flat (row-major) indices into the raster. Merge
    components contain only false-positive pixels, split components only
    false-negative pixels; all listed sets are pairwise disjoint. The
    deltas record the signed component-count change each component causes
    (positive for merge components removed, negative for split components
    filled in).
    """

    shape: tuple[int, int]
    merge_components: tuple[np.ndarray, ...]
    merge_deltas: tuple[int, ...]
    split_components: tuple[np.ndarray, ...]
    split_deltas: tuple[int, ...]

    @property
    def is_empty(self) -> bool:
        return not self.merge_components and not self.split_components

    def merge_mask(self) -> np.ndarray:
        return self._mask(self.merge_components)

    def split_mask(self) -> np.ndarray:
        return self._mask(self.split_components)

    def _mask(self, groups: tuple[np.ndarray, ...]) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        if groups:
            mask.ravel()[np.concatenate(groups)] = True
        return mask


def select_critical_components(
    y, y_hat, connectivity: int = DEFAULT_CONNECTIVITY
) -> ComponentSelection:
    """Find error components that alter the prediction's component count.

    ``y_hat`` must already be binary. A false-positive component C is
    selected iff removing it raises the component count (it glues parts
    together); a false-negative component C is selected iff filling it in
    lowers the count (it severs a line).
    """
    y = check_mask(y, "ground truth")
    y_hat = check_mask(y_hat, "prediction")
    check_same_shape(y, y_hat, "ground truth", "prediction")
    check_connectivity(connectivity)

    base = count_components(y_hat, connectivity)
    merge, merge_deltas = _scan_candidates(y_hat & ~y, y_hat, base, connectivity, remove=True)
    split, split_deltas = _scan_candidates(y & ~y_hat, y_hat, base, connectivity, remove=False)
    return ComponentSelection(
        shape=y.shape,
        merge_components=merge,
        merge_deltas=merge_deltas,
        split_components=split,
        split_deltas=split_deltas,
    )


def _scan_candidates(errors, y_hat, base, connectivity, remove):
    labels = label_components(errors, connectivity)
    picked, deltas = [], []
    for k in range(1, int(labels.max()) + 1):
        comp = labels == k
        trial = (y_hat & ~comp) if remove else (y_hat | comp)
        trial_count = count_components(trial, connectivity)
        if (remove and trial_count > base) or (not remove and trial_count < base):
            picked.append(np.flatnonzero(comp.ravel()))
            deltas.append(trial_count - base)
    return tuple(picked), tuple(deltas)


def dice_loss(y, y_hat, epsilon: float = 1.0) -> float:
    """Smoothed Dice loss: 1 - (2*sum(y*p) + eps) / (sum(y) + sum(p) + eps)."""
    y = check_mask(y, "ground truth")
    p = check_prob_map(y_hat)
    check_same_shape(y, p, "ground truth", "prediction")
    if epsilon < 0:
        raise ValueError(f"epsilon must be >= 0, got {epsilon}")
    inter = float(p[y].sum())
    denom = float(y.sum()) + float(p.sum()) + epsilon
    if denom == 0.0:
        return 0.0
    return 1.0 - (2.0 * inter + epsilon) / denom


def _dice_gradient(y: np.ndarray, p: np.ndarray, epsilon: float) -> np.ndarray:
    inter = float(p[y].sum())
    denom = float(y.sum()) + float(p.sum()) + epsilon
    if denom == 0.0:
        return np.zeros_like(p)
    num = 2.0 * inter + epsilon
    return np.where(y, num - 2.0 * denom, num) / (denom * denom)


@dataclass(frozen=True)
class LossReport:
    """Decomposed loss value.

    ``pixel_term``, ``merge_term`` and ``split_term`` are raw cross-entropy
    sums before the alpha/beta weighting; ``total`` applies the weighting
    documented in the module docstring.
    """

    total: float
    dice_term: float
    pixel_term: float
    merge_term: float
    split_term: float
    n_pixels: int

    def as_dict(self) -> dict:
        return {
            "total": self.total,
            "dice_term": self.dice_term,
            "pixel_term": self.pixel_term,
            "merge_term": self.merge_term,
            "split_term": self.split_term,
            "n_pixels": self.n_pixels,
        }


class ConnectivityLoss(BaseEstimator):
    """Component-aware loss on (ground truth mask, probability map) pairs.

    Parameters
    ----------
    alpha : float in [0, 1]
        Weight of the component terms against the dense pixel term.
    beta : float in [0, 1]
        Weight of split penalties against merge penalties (0 = only
        merge errors are penalized).
    binarize_threshold : float in (0, 1)
        Threshold used to discretize the prediction before component
        analysis.
    dice_epsilon : float >= 0
        Smoothing constant of the Dice term.
    structure_weight : float > 0
        Scale of the cross-entropy block relative to the Dice term.
    connectivity : int, 4 or 8
        Pixel adjacency used for component analysis.
    clamp_epsilon : float in (0, 0.5)
        Probabilities are clamped to [clamp_epsilon, 1 - clamp_epsilon]
        inside the cross-entropy so saturated pixels stay finite.
    """

    def __init__(
        self,
        alpha: float = 1.0,
        beta: float = 0.0,
        binarize_threshold: float = 0.5,
        dice_epsilon: float = 1.0,
        structure_weight: float = 10.0,
        connectivity: int = DEFAULT_CONNECTIVITY,
        clamp_epsilon: float = 1e-7,
    ):
        self.alpha = alpha
        self.beta = beta
        self.binarize_threshold = binarize_threshold
        self.dice_epsilon = dice_epsilon
        self.structure_weight = structure_weight
        self.connectivity = connectivity
        self.clamp_epsilon = clamp_epsilon

    def _validate_params(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must lie in [0, 1], got {self.beta}")
        if not 0.0 < self.binarize_threshold < 1.0:
            raise ValueError(
                f"binarize_threshold must lie in (0, 1), got {self.binarize_threshold}"
            )
        if self.dice_epsilon < 0:
            raise ValueError(f"dice_epsilon must be >= 0, got {self.dice_epsilon}")
        if self.structure_weight <= 0:
            raise ValueError(
                f"structure_weight must be > 0, got {self.structure_weight}"
            )
        if not 0.0 < self.clamp_epsilon < 0.5:
            raise ValueError(
                f"clamp_epsilon must lie in (0, 0.5), got {self.clamp_epsilon}"
            )
        check_connectivity(self.connectivity)

    def select(self, y, y_hat) -> ComponentSelection:
        """Component selection for a prediction (probabilities or binary)."""
        self._validate_params()
        y_hat = np.asarray(y_hat)
        if y_hat.dtype != bool:
            y_hat = binarize(check_prob_map(y_hat), self.binarize_threshold)
        return select_critical_components(y, y_hat, self.connectivity)

    def report(self, y, y_hat, selection: ComponentSelection | None = None) -> LossReport:
        """Evaluate the loss, returning all its terms."""
        self._validate_params()
        y = check_mask(y, "ground truth")
        p = check_prob_map(y_hat)
        check_same_shape(y, p, "ground truth", "prediction")
        if selection is None:
            selection = self.select(y, p)
        elif selection.shape != y.shape:
            raise ValueError(
                f"selection shape {selection.shape} does not match input shape {y.shape}"
            )

        bce = self._bce_map(y, p)
        flat = bce.ravel()
        pixel = float(bce.sum())
        merge = float(sum(flat[idx].sum() for idx in selection.merge_components))
        split = float(sum(flat[idx].sum() for idx in selection.split_components))
        dice = dice_loss(y, p, self.dice_epsilon)
        n = p.size
        total = dice + (self.structure_weight / n) * (
            (1.0 - self.alpha) * pixel
            + self.alpha * ((1.0 - self.beta) * merge + self.beta * split)
        )
        return LossReport(
            total=total,
            dice_term=dice,
            pixel_term=pixel,
            merge_term=merge,
            split_term=split,
            n_pixels=n,
        )

    def gradient(self, y, y_hat, selection: ComponentSelection | None = None) -> np.ndarray:
        """d(total)/d(prediction) per pixel, with the selection held fixed."""
        self._validate_params()
        y = check_mask(y, "ground truth")
        p = check_prob_map(y_hat)
        check_same_shape(y, p, "ground truth", "prediction")
        if selection is None:
            selection = self.select(y, p)
        elif selection.shape != y.shape:
            raise ValueError(
                f"selection shape {selection.shape} does not match input shape {y.shape}"
            )

        clamped = np.clip(p, self.clamp_epsilon, 1.0 - self.clamp_epsilon)
        bce_deriv = (clamped - y) / (clamped * (1.0 - clamped))

        weights = np.full(p.shape, 1.0 - self.alpha)
        flat = weights.ravel()
        for idx in selection.merge_components:
            flat[idx] += self.alpha * (1.0 - self.beta)
        for idx in selection.split_components:
            flat[idx] += self.alpha * self.beta

        grad = _dice_gradient(y, p, self.dice_epsilon)
        grad += (self.structure_weight / p.size) * weights * bce_deriv
        return grad

    def __call__(self, y, y_hat) -> float:
        return self.report(y, y_hat).total

    def _bce_map(self, y: np.ndarray, p: np.ndarray) -> np.ndarray:
        clamped = np.clip(p, self.clamp_epsilon, 1.0 - self.clamp_epsilon)
        return -np.where(y, np.log(clamped), np.log1p(-clamped))
