"""Gradient-based prediction refinement driven by the connectivity loss.

``TopologyRepair`` runs plain gradient descent on the logits of a
probability map against a fixed ground-truth mask. It makes the loss's
behavior observable end to end without any network: merge/split defects
in the initial prediction get pushed across the binarization threshold.

``finite_diff_check`` verifies the analytic gradient against central
finite differences with the component selection frozen, since the
selection is piecewise constant and intentionally carries no gradient.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit
from sklearn.base import BaseEstimator

from .components import binarize, count_components
from .loss import ConnectivityLoss, LossReport
from .metrics import pixel_iou
from .validation import check_mask, check_prob_map, check_same_shape

_PROB_FLOOR = 1e-12

TRACE_COLUMNS = ("step", "total", "dice", "pixel", "merge", "split", "cc", "pixel_iou")


@dataclass(frozen=True)
class TraceRow:
    step: int
    total: float
    dice_term: float
    pixel_term: float
    merge_term: float
    split_term: float
    n_components: int
    pixel_iou: float


def trace_to_tsv(rows) -> str:
    """Tab-separated trace with a header row."""
    out = ["\t".join(TRACE_COLUMNS)]
    for r in rows:
        out.append(
            f"{r.step}\t{r.total:.10g}\t{r.dice_term:.10g}\t{r.pixel_term:.10g}"
            f"\t{r.merge_term:.10g}\t{r.split_term:.10g}\t{r.n_components}"
            f"\t{r.pixel_iou:.10g}"
        )
    return "".join(line + "\n" for line in out)


class RepairError(RuntimeError):
    """Optimization aborted on a non-finite loss or gradient."""

    def __init__(self, message: str, trace: tuple[TraceRow, ...]):
        super().__init__(message)
        self.trace = trace


class TopologyRepair(BaseEstimator):
    """Descend the connectivity loss on prediction logits.

    Parameters
    ----------
    loss : ConnectivityLoss or None
        Loss to descend; None uses the default configuration.
    steps : int
        Number of gradient steps.
    step_size : float
        Step size in logit space. Gradients scale with 1/n_pixels, so
        large rasters need proportionally larger steps.
    refresh_every : int
        Recompute the component selection every this many steps.
    log_every : int
        Trace every this many steps (the final state is always traced).

    After ``fit(X, y)`` (X = initial probabilities strictly inside (0, 1),
    y = ground-truth mask), ``probs_`` holds the final probability map and
    ``trace_`` the logged rows.
    """

    def __init__(
        self,
        loss: ConnectivityLoss | None = None,
        steps: int = 500,
        step_size: float = 0.5,
        refresh_every: int = 10,
        log_every: int = 1,
    ):
        self.loss = loss
        self.steps = steps
        self.step_size = step_size
        self.refresh_every = refresh_every
        self.log_every = log_every

    def _validate_params(self) -> ConnectivityLoss:
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if self.step_size <= 0:
            raise ValueError(f"step_size must be > 0, got {self.step_size}")
        if self.refresh_every < 1:
            raise ValueError(f"refresh_every must be >= 1, got {self.refresh_every}")
        if self.log_every < 1:
            raise ValueError(f"log_every must be >= 1, got {self.log_every}")
        return self.loss if self.loss is not None else ConnectivityLoss()

    def fit(self, X, y):
        loss = self._validate_params()
        probs = check_prob_map(X, "initial prediction")
        target = check_mask(y, "ground truth")
        check_same_shape(target, probs, "ground truth", "initial prediction")
        if probs.min() <= 0.0 or probs.max() >= 1.0:
            raise ValueError("initial probabilities must lie strictly inside (0, 1)")

        logits = np.log(probs / (1.0 - probs))
        rows: list[TraceRow] = []
        selection = None
        for step in range(self.steps):
            if step % self.refresh_every == 0:
                selection = loss.select(target, probs)
            report = loss.report(target, probs, selection)
            if not np.isfinite(report.total):
                raise RepairError(
                    f"non-finite loss at step {step}", tuple(rows)
                )
            if step % self.log_every == 0:
                rows.append(self._trace_row(step, report, target, probs, loss))
            grad = loss.gradient(target, probs, selection)
            if not np.isfinite(grad).all():
                raise RepairError(
                    f"non-finite gradient at step {step}", tuple(rows)
                )
            logits = logits - self.step_size * grad * (probs * (1.0 - probs))
            probs = np.clip(expit(logits), _PROB_FLOOR, 1.0 - _PROB_FLOOR)

        selection = loss.select(target, probs)
        final_report = loss.report(target, probs, selection)
        rows.append(self._trace_row(self.steps, final_report, target, probs, loss))

        self.probs_ = probs
        self.trace_ = tuple(rows)
        return self

    @staticmethod
    def _trace_row(step, report: LossReport, target, probs, loss) -> TraceRow:
        mask = binarize(probs, loss.binarize_threshold)
        return TraceRow(
            step=step,
            total=report.total,
            dice_term=report.dice_term,
            pixel_term=report.pixel_term,
            merge_term=report.merge_term,
            split_term=report.split_term,
            n_components=count_components(mask, loss.connectivity),
            pixel_iou=pixel_iou(target, mask),
        )


def steps_until_component_match(trace, target_count: int) -> int | None:
    """First traced step whose binarized prediction has the target count."""
    for row in trace:
        if row.n_components == target_count:
            return row.step
    return None


def finite_diff_check(
    y,
    y_hat,
    loss: ConnectivityLoss | None = None,
    h: float = 1e-5,
    sample: int = 64,
    seed: int = 0,
) -> float:
    """Max relative error of the analytic gradient vs central differences.

    The component selection is computed once and frozen across all
    evaluations. Sampled pixels keep a 2h margin from the clamped
    probability range so the finite difference never straddles the clamp.
    """
    if not 0.0 < h <= 1e-2:
        raise ValueError(f"h must lie in (0, 1e-2], got {h}")
    if sample < 1:
        raise ValueError(f"sample must be >= 1, got {sample}")
    if loss is None:
        loss = ConnectivityLoss()
    y = check_mask(y, "ground truth")
    probs = check_prob_map(y_hat)
    check_same_shape(y, probs, "ground truth", "prediction")

    selection = loss.select(y, probs)
    analytic = loss.gradient(y, probs, selection).ravel()

    lo = loss.clamp_epsilon + 2.0 * h
    hi = 1.0 - loss.clamp_epsilon - 2.0 * h
    eligible = np.flatnonzero((probs.ravel() > lo) & (probs.ravel() < hi))
    if len(eligible) == 0:
        raise ValueError("no pixels far enough from the clamp range to test")
    rng = np.random.default_rng(seed)
    picked = rng.choice(eligible, size=min(sample, len(eligible)), replace=False)

    max_rel = 0.0
    flat = probs.ravel()
    for idx in picked:
        bumped = flat.copy()
        bumped[idx] = flat[idx] + h
        plus = loss.report(y, bumped.reshape(probs.shape), selection).total
        bumped[idx] = flat[idx] - h
        minus = loss.report(y, bumped.reshape(probs.shape), selection).total
        fd = (plus - minus) / (2.0 * h)
        denom = max(abs(analytic[idx]), abs(fd), 1e-12)
        max_rel = max(max_rel, abs(analytic[idx] - fd) / denom)
    return max_rel
