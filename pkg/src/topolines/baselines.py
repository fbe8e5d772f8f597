"""Baseline polylines: extraction from masks, post-processing, serialization.

A baseline is an ordered chain of (x, y) points in pixel units. Extraction
walks each connected component column by column and takes the vertical
centroid, so the result is monotone in x; merged or parsed chains may be
arbitrary.

The text serialization is one line per baseline, semicolon-separated
integer points: ``x1,y1;x2,y2;...`` (UTF-8, LF line endings).
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .components import DEFAULT_CONNECTIVITY, label_components
from .validation import check_mask

PIPELINE_ORDERS = ("filter-first", "merge-first")


class Polyline:
    """An ordered point chain with at least two points and positive length."""

    __slots__ = ("_points",)

    def __init__(self, points):
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError(f"polyline points must have shape (n, 2), got {pts.shape}")
        if len(pts) < 2:
            raise ValueError("a polyline needs at least two points")
        if not np.isfinite(pts).all():
            raise ValueError("polyline points must be finite")
        if (np.diff(pts, axis=0) == 0).all(axis=1).any():
            raise ValueError("consecutive polyline points must be distinct")
        pts = pts.copy()
        pts.setflags(write=False)
        self._points = pts

    @property
    def points(self) -> np.ndarray:
        return self._points

    @property
    def length(self) -> float:
        return float(np.hypot(*np.diff(self._points, axis=0).T).sum())

    def resample(self, spacing: float = 1.0) -> np.ndarray:
        """Evenly spaced points along the chain (spacing <= the requested one)."""
        if spacing <= 0:
            raise ValueError(f"spacing must be > 0, got {spacing}")
        seg = np.hypot(*np.diff(self._points, axis=0).T)
        arc = np.concatenate([[0.0], np.cumsum(seg)])
        total = arc[-1]
        n = max(2, int(np.ceil(total / spacing)) + 1)
        targets = np.linspace(0.0, total, n)
        x = np.interp(targets, arc, self._points[:, 0])
        y = np.interp(targets, arc, self._points[:, 1])
        return np.column_stack([x, y])

    def __len__(self) -> int:
        return len(self._points)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Polyline):
            return NotImplemented
        return np.array_equal(self._points, other._points)

    def __hash__(self):
        return hash(self._points.tobytes())

    def __repr__(self) -> str:
        return f"Polyline({len(self._points)} points, length {self.length:.1f})"


def _douglas_peucker(points: np.ndarray, tolerance: float) -> np.ndarray:
    keep = np.zeros(len(points), dtype=bool)
    keep[0] = keep[-1] = True
    stack = [(0, len(points) - 1)]
    while stack:
        i, j = stack.pop()
        if j <= i + 1:
            continue
        start, end = points[i], points[j]
        seg = end - start
        seg_len = np.hypot(*seg)
        rel = points[i + 1 : j] - start
        if seg_len == 0.0:
            dist = np.hypot(rel[:, 0], rel[:, 1])
        else:
            dist = np.abs(seg[0] * rel[:, 1] - seg[1] * rel[:, 0]) / seg_len
        k = int(np.argmax(dist))
        if dist[k] > tolerance:
            mid = i + 1 + k
            keep[mid] = True
            stack.append((i, mid))
            stack.append((mid, j))
    return points[keep]


def extract_baselines(
    mask,
    connectivity: int = DEFAULT_CONNECTIVITY,
    simplify_tolerance: float = 1.0,
) -> list[Polyline]:
    """Vectorize each connected component into a baseline polyline.

    Per component, every occupied column contributes the vertical centroid
    of its foreground pixels; the points are ordered by x and simplified
    with Douglas-Peucker. Components occupying a single column yield no
    polyline.
    """
    mask = check_mask(mask)
    labels = label_components(mask, connectivity)
    lines: list[Polyline] = []
    for k in range(1, int(labels.max()) + 1):
        rows, cols = np.nonzero(labels == k)
        counts = np.bincount(cols)
        sums = np.bincount(cols, weights=rows)
        occupied = np.flatnonzero(counts)
        if len(occupied) < 2:
            continue
        pts = np.column_stack([occupied.astype(float), sums[occupied] / counts[occupied]])
        pts = _douglas_peucker(pts, simplify_tolerance)
        lines.append(Polyline(pts))
    return lines


def filter_short(lines: Iterable[Polyline], min_length: float = 50.0) -> list[Polyline]:
    """Drop polylines strictly shorter than ``min_length`` (order preserved)."""
    if min_length <= 0:
        raise ValueError(f"min_length must be > 0, got {min_length}")
    return [line for line in lines if line.length >= min_length]


def polyline_orientation(line: Polyline) -> float:
    """Dominant orientation of the point cloud in degrees, in [0, 180)."""
    pts = line.points - line.points.mean(axis=0)
    cov = pts.T @ pts
    eigvals, eigvecs = np.linalg.eigh(cov)
    vx, vy = eigvecs[:, int(np.argmax(eigvals))]
    return float(np.degrees(np.arctan2(vy, vx)) % 180.0)


def _orientation_gap(a: float, b: float) -> float:
    d = abs(a - b) % 180.0
    return min(d, 180.0 - d)


def _endpoint_distance(a: Polyline, b: Polyline) -> float:
    ends_a = a.points[[0, -1]]
    ends_b = b.points[[0, -1]]
    diff = ends_a[:, None, :] - ends_b[None, :, :]
    return float(np.hypot(diff[..., 0], diff[..., 1]).min())


def merge_close(
    lines: Sequence[Polyline],
    distance_threshold: float = 50.0,
    angle_threshold: float = 15.0,
) -> list[Polyline]:
    """Merge polylines that are close end-to-end and similarly oriented.

    Two polylines are mergeable when their minimum endpoint-to-endpoint
    distance is within ``distance_threshold`` and their dominant
    orientations differ by at most ``angle_threshold`` degrees. Merging is
    transitive; each merged group becomes one polyline (points
    concatenated and re-ordered by x). Output is sorted by leftmost x,
    then topmost y.
    """
    if distance_threshold <= 0 or angle_threshold <= 0:
        raise ValueError("distance_threshold and angle_threshold must be > 0")
    lines = list(lines)
    n = len(lines)
    if n == 0:
        return []

    orientations = [polyline_orientation(line) for line in lines]
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if _endpoint_distance(lines[i], lines[j]) > distance_threshold:
                continue
            if _orientation_gap(orientations[i], orientations[j]) > angle_threshold:
                continue
            ri, rj = find(i), find(j)
            if ri != rj:
                parent[rj] = ri

    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)

    merged: list[Polyline] = []
    for members in groups.values():
        if len(members) == 1:
            merged.append(lines[members[0]])
            continue
        pts = np.concatenate([lines[i].points for i in members])
        order = np.lexsort((pts[:, 1], pts[:, 0]))
        pts = pts[order]
        distinct = np.concatenate([[True], (np.diff(pts, axis=0) != 0).any(axis=1)])
        merged.append(Polyline(pts[distinct]))

    merged.sort(key=lambda ln: (float(ln.points[:, 0].min()), float(ln.points[:, 1].min())))
    return merged


def post_process(
    mask,
    min_length: float = 50.0,
    distance_threshold: float = 50.0,
    angle_threshold: float = 15.0,
    order: str = "filter-first",
    connectivity: int = DEFAULT_CONNECTIVITY,
    simplify_tolerance: float = 1.0,
) -> list[Polyline]:
    """Extract baselines and clean them up.

    ``order`` selects whether the length filter runs before the merge step
    (the default) or after it ("merge-first"); merging first can rescue
    short fragments that only reach the minimum length together.
    """
    if order not in PIPELINE_ORDERS:
        raise ValueError(f"order must be one of {PIPELINE_ORDERS}, got {order!r}")
    lines = extract_baselines(mask, connectivity, simplify_tolerance)
    if order == "filter-first":
        lines = filter_short(lines, min_length)
        lines = merge_close(lines, distance_threshold, angle_threshold)
    else:
        lines = merge_close(lines, distance_threshold, angle_threshold)
        lines = filter_short(lines, min_length)
    return lines


class BaselinePostProcessor(BaseEstimator, TransformerMixin):
    """Estimator wrapper around :func:`post_process` (stateless)."""

    def __init__(
        self,
        min_length: float = 50.0,
        distance_threshold: float = 50.0,
        angle_threshold: float = 15.0,
        order: str = "filter-first",
        connectivity: int = DEFAULT_CONNECTIVITY,
        simplify_tolerance: float = 1.0,
    ):
        self.min_length = min_length
        self.distance_threshold = distance_threshold
        self.angle_threshold = angle_threshold
        self.order = order
        self.connectivity = connectivity
        self.simplify_tolerance = simplify_tolerance

    def fit(self, X=None, y=None):
        return self

    def transform(self, mask) -> list[Polyline]:
        return post_process(
            mask,
            min_length=self.min_length,
            distance_threshold=self.distance_threshold,
            angle_threshold=self.angle_threshold,
            order=self.order,
            connectivity=self.connectivity,
            simplify_tolerance=self.simplify_tolerance,
        )


def format_baselines(lines: Iterable[Polyline]) -> str:
    """Serialize polylines, one per line, points integer-rounded."""
    out = []
    for line in lines:
        pts = np.rint(line.points).astype(int)
        out.append(";".join(f"{x},{y}" for x, y in pts))
    return "".join(row + "\n" for row in out)


def parse_baselines(text: str) -> list[Polyline]:
    """Parse the text serialization produced by :func:`format_baselines`.

    Consecutive duplicate points (possible after integer rounding) are
    dropped; a chain that collapses below two points is an error.
    """
    lines: list[Polyline] = []
    for lineno, row in enumerate(text.splitlines(), start=1):
        row = row.strip()
        if not row:
            continue
        pts = []
        for token in row.split(";"):
            parts = token.split(",")
            if len(parts) != 2:
                raise ValueError(f"line {lineno}: malformed point {token!r}")
            try:
                pts.append((float(parts[0]), float(parts[1])))
            except ValueError as exc:
                raise ValueError(f"line {lineno}: malformed point {token!r}") from exc
        arr = np.asarray(pts, dtype=float)
        if len(arr) >= 2:
            distinct = np.concatenate([[True], (np.diff(arr, axis=0) != 0).any(axis=1)])
            arr = arr[distinct]
        if len(arr) < 2:
            raise ValueError(f"line {lineno}: a baseline needs at least two distinct points")
        lines.append(Polyline(arr))
    return lines
