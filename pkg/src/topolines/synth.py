"""Deterministic synthetic manuscript pages with controllable topology defects.

Pages consist of wavy horizontal strokes (one label per stroke) on a
textured light background. ``corrupt`` injects the three defect kinds the
rest of the toolkit reasons about:

* ``bridge`` - a thin foreground path connecting two vertically adjacent
  strokes (a false merge),
* ``gap`` - foreground removal that fully severs one stroke (a false
  split),
* ``blob`` - an isolated foreground speck that changes no connectivity.

Every corruption is recorded with its exact pixel set so it can be
verified against component analysis and undone exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np
from scipy import ndimage

from .baselines import Polyline
from .components import count_components
from .validation import check_label_map

_MAX_ATTEMPTS = 500


class CorruptionError(ValueError):
    """Requested corruption is geometrically infeasible."""


@dataclass(frozen=True)
class PageSpec:
    """Geometry of a generated page.

    The vertical budget must fit all lines at maximum thickness with
    minimum gaps: n_lines * (max thickness + min gap) <= height.
    """

    width: int = 256
    height: int = 192
    n_lines: int = 5
    thickness_range: tuple[int, int] = (3, 5)
    gap_range: tuple[int, int] = (8, 16)
    waviness: float = 2.0
    columns: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.width < 16 or self.height < 8:
            raise ValueError(f"page too small: {self.width}x{self.height}")
        if self.n_lines < 1:
            raise ValueError(f"n_lines must be >= 1, got {self.n_lines}")
        if self.columns < 1:
            raise ValueError(f"columns must be >= 1, got {self.columns}")
        t_lo, t_hi = self.thickness_range
        g_lo, g_hi = self.gap_range
        if not (1 <= t_lo <= t_hi):
            raise ValueError(f"bad thickness_range {self.thickness_range}")
        if not (1 <= g_lo <= g_hi):
            raise ValueError(f"bad gap_range {self.gap_range}")
        if self.waviness < 0:
            raise ValueError(f"waviness must be >= 0, got {self.waviness}")
        if self.n_lines * (t_hi + g_lo) > self.height:
            raise ValueError(
                f"unsatisfiable geometry: {self.n_lines} lines of up to {t_hi}px "
                f"with gaps >= {g_lo}px do not fit a height of {self.height}"
            )
        if self.width // self.columns < 16:
            raise ValueError(
                f"columns too narrow: {self.columns} columns in a width of {self.width}"
            )


def _value_noise(rng: np.random.Generator, shape: tuple[int, int], cell: int = 8) -> np.ndarray:
    h, w = shape
    coarse = rng.random((h // cell + 2, w // cell + 2))
    fine = ndimage.zoom(coarse, cell, order=1)
    return fine[:h, :w]


def generate_page(spec: PageSpec) -> tuple[np.ndarray, np.ndarray, list[Polyline]]:
    """Render a page: grayscale image, ground-truth label map, baselines.

    Strokes are labeled 1..n in column-major, top-to-bottom order; the
    returned baselines follow each stroke's centerline in the same order.
    Bit-identical for equal specs.
    """
    rng = np.random.default_rng(spec.seed)
    labels = np.zeros((spec.height, spec.width), dtype=np.int32)
    baselines: list[Polyline] = []

    t_lo, t_hi = spec.thickness_range
    g_lo, g_hi = spec.gap_range
    margin_y = int(np.ceil(spec.waviness)) + 2
    col_width = spec.width // spec.columns
    margin_x = max(3, col_width // 16)

    label = 0
    for col in range(spec.columns):
        x_lo = col * col_width + margin_x
        x_hi = (col + 1) * col_width - margin_x - 1
        xs = np.arange(x_lo, x_hi + 1)

        thicknesses = rng.integers(t_lo, t_hi + 1, size=spec.n_lines)
        slack = (
            spec.height
            - 2 * margin_y
            - int(thicknesses.sum())
            - (spec.n_lines - 1) * g_lo
        )
        if slack < 0:
            raise ValueError(
                f"unsatisfiable geometry in column {col}: lines do not fit "
                f"between the vertical margins"
            )
        top_extra = int(rng.integers(0, slack + 1))
        slack -= top_extra
        cursor = margin_y + top_extra

        for i in range(spec.n_lines):
            t = int(thicknesses[i])
            wavelength = float(rng.uniform(0.6, 1.2)) * max(len(xs), 16)
            phase = float(rng.uniform(0.0, 2.0 * np.pi))
            center = cursor + (t - 1) / 2.0
            curve = center + spec.waviness * np.sin(2.0 * np.pi * xs / wavelength + phase)

            top = np.rint(curve - (t - 1) / 2.0).astype(int)
            rows = top[None, :] + np.arange(t)[:, None]
            label += 1
            labels[rows, np.broadcast_to(xs, rows.shape)] = label

            pick = np.unique(np.append(np.arange(0, len(xs), 4), len(xs) - 1))
            baselines.append(Polyline(np.column_stack([xs[pick], curve[pick]])))

            if i < spec.n_lines - 1:
                extra = int(rng.integers(0, min(g_hi - g_lo, slack) + 1))
                slack -= extra
                cursor += t + g_lo + extra

    background = 0.82 + 0.08 * (_value_noise(rng, labels.shape) - 0.5)
    ink = 0.14 + 0.05 * rng.random(labels.shape)
    image = np.where(labels > 0, ink, background)
    return np.clip(image, 0.0, 1.0), labels, baselines


@dataclass(frozen=True)
class CorruptionItem:
    """One injected defect: kind, sorted flat pixel indices, touched labels."""

    kind: str
    pixels: np.ndarray
    labels: tuple[int, ...]


@dataclass(frozen=True)
class CorruptionRecord:
    shape: tuple[int, int]
    items: tuple[CorruptionItem, ...]

    def of_kind(self, kind: str) -> Iterator[CorruptionItem]:
        return (item for item in self.items if item.kind == kind)

    def undo(self, mask: np.ndarray) -> np.ndarray:
        """Revert every recorded corruption on a copy of ``mask``."""
        out = mask.copy()
        flat = out.ravel()
        for item in reversed(self.items):
            flat[item.pixels] = item.kind == "gap"
        return out


def corrupt(
    labels,
    bridges: int = 0,
    gaps: int = 0,
    blobs: int = 0,
    seed: int = 0,
    gap_width: tuple[int, int] = (3, 6),
    connectivity: int = 8,
) -> tuple[np.ndarray, CorruptionRecord]:
    """Inject topology defects into the mask of a label map.

    Returns the corrupted binary mask and a record of every defect. Each
    defect is verified against the evolving mask: a bridge must lower the
    component count by one, a gap and a blob must raise it by one.
    Infeasible requests raise :class:`CorruptionError` naming the kind.
    """
    labels = check_label_map(labels)
    rng = np.random.default_rng(seed)
    work = labels > 0
    taken = np.zeros_like(work)  # corruption sites plus a 1px moat
    items: list[CorruptionItem] = []

    for _ in range(bridges):
        items.append(_inject_bridge(work, labels, taken, rng, connectivity))
    for _ in range(gaps):
        items.append(_inject_gap(work, labels, taken, rng, gap_width, connectivity))
    for _ in range(blobs):
        items.append(_inject_blob(work, taken, rng, connectivity))

    return work, CorruptionRecord(shape=work.shape, items=tuple(items))


def _mark_taken(taken: np.ndarray, rows, cols) -> None:
    h, w = taken.shape
    r0, r1 = max(0, int(np.min(rows)) - 1), min(h, int(np.max(rows)) + 2)
    c0, c1 = max(0, int(np.min(cols)) - 1), min(w, int(np.max(cols)) + 2)
    taken[r0:r1, c0:c1] = True


def _bridge_sites(labels: np.ndarray, rng: np.random.Generator):
    h, w = labels.shape
    for x in rng.permutation(w):
        col = labels[:, x]
        rows = np.flatnonzero(col)
        if len(rows) == 0:
            continue
        # consecutive label runs down this column
        run_ends = np.flatnonzero(np.diff(rows) > 1)
        bounds = np.concatenate([run_ends, [len(rows) - 1]])
        starts = np.concatenate([[0], run_ends + 1])
        for i in range(len(bounds) - 1):
            r_top = rows[bounds[i]]
            r_bot = rows[starts[i + 1]]
            a, b = int(col[r_top]), int(col[r_bot])
            if a != b and r_bot - r_top >= 3:
                yield int(x), int(r_top), int(r_bot), a, b


def _inject_bridge(work, labels, taken, rng, connectivity) -> CorruptionItem:
    before = count_components(work, connectivity)
    attempts = 0
    for x, r_top, r_bot, a, b in _bridge_sites(labels, rng):
        attempts += 1
        if attempts > _MAX_ATTEMPTS:
            break
        rows = np.arange(r_top + 1, r_bot)
        if work[rows, x].any() or taken[rows, x].any():
            continue
        work[rows, x] = True
        if count_components(work, connectivity) == before - 1:
            _mark_taken(taken, rows, [x])
            flat = np.sort(rows * work.shape[1] + x)
            return CorruptionItem(kind="bridge", pixels=flat, labels=(a, b))
        work[rows, x] = False
    raise CorruptionError("bridge: no feasible site connecting two distinct lines")


def _inject_gap(work, labels, taken, rng, gap_width, connectivity) -> CorruptionItem:
    before = count_components(work, connectivity)
    w_lo, w_hi = gap_width
    if not 1 <= w_lo <= w_hi:
        raise ValueError(f"bad gap_width {gap_width}")
    ids = rng.permutation(np.unique(labels[labels > 0]))
    for lbl in ids:
        lbl = int(lbl)
        cols = np.flatnonzero((labels == lbl).any(axis=0))
        width = int(rng.integers(w_lo, w_hi + 1))
        if len(cols) < width + 4:
            continue
        lo, hi = int(cols.min()), int(cols.max())
        span = hi - lo + 1 - width - 2
        if span <= 0:
            continue
        jitter = int(rng.integers(0, max(1, span // 4) + 1)) - max(1, span // 4) // 2
        x0 = lo + 1 + span // 2 + jitter
        x0 = min(max(x0, lo + 1), hi - width)
        region = (labels == lbl) & work
        region[:, : x0] = False
        region[:, x0 + width :] = False
        if not region.any() or taken[region].any():
            continue
        work[region] = False
        if count_components(work, connectivity) == before + 1:
            rows, cols_hit = np.nonzero(region)
            _mark_taken(taken, rows, cols_hit)
            flat = np.sort(rows * work.shape[1] + cols_hit)
            return CorruptionItem(kind="gap", pixels=flat, labels=(lbl,))
        work[region] = True
    raise CorruptionError("gap: no feasible site fully severing a line")


def _inject_blob(work, taken, rng, connectivity) -> CorruptionItem:
    before = count_components(work, connectivity)
    h, w = work.shape
    for _ in range(_MAX_ATTEMPTS):
        r0 = int(rng.integers(1, h - 4))
        c0 = int(rng.integers(1, w - 4))
        neighborhood = work[max(0, r0 - 2) : r0 + 5, max(0, c0 - 2) : c0 + 5]
        if neighborhood.any() or taken[r0 : r0 + 3, c0 : c0 + 3].any():
            continue
        work[r0 : r0 + 3, c0 : c0 + 3] = True
        if count_components(work, connectivity) == before + 1:
            rows, cols = np.meshgrid(np.arange(r0, r0 + 3), np.arange(c0, c0 + 3), indexing="ij")
            _mark_taken(taken, rows, cols)
            flat = np.sort(rows.ravel() * w + cols.ravel())
            return CorruptionItem(kind="blob", pixels=flat, labels=())
        work[r0 : r0 + 3, c0 : c0 + 3] = False
    raise CorruptionError("blob: no isolated background site found")
