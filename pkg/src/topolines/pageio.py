"""Data ingestion and persistence: PAGE XML, PNG masks, manifests.

PAGE XML parsing is namespace-tolerant (elements are matched by local
name) and extracts TextLine polygons and baselines. Masks are 8-bit
single-channel PNGs with 0 = background and 255 = foreground; any
nonzero value reads back as foreground.
"""

from __future__ import annotations

import os
import xml.etree.ElementTree as ET
from dataclasses import dataclass

import numpy as np
from PIL import Image
from scipy import ndimage

from .baselines import Polyline
from .validation import check_mask, check_prob_map

DEFAULT_DOWNSAMPLE_FACTOR = 3
DEFAULT_BASELINE_THICKNESS = 5
SPLITS = ("train", "val", "test")


class PageXmlError(ValueError):
    """Malformed or unusable PAGE XML input."""


class MaskFormatError(ValueError):
    """Raster file with an unsupported format, bit depth or color type."""


@dataclass(frozen=True)
class TextLineAnnotation:
    id: str
    polygon: np.ndarray | None = None
    baseline: Polyline | None = None


@dataclass(frozen=True)
class PageAnnotation:
    width: int
    height: int
    lines: tuple[TextLineAnnotation, ...] = ()
    warnings: tuple[str, ...] = ()


def _local_name(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def _parse_points(text: str, context: str) -> np.ndarray:
    pts = []
    for token in text.split():
        parts = token.split(",")
        if len(parts) != 2:
            raise PageXmlError(f"{context}: malformed point {token!r}")
        try:
            pts.append((float(parts[0]), float(parts[1])))
        except ValueError as exc:
            raise PageXmlError(f"{context}: malformed point {token!r}") from exc
    return np.asarray(pts, dtype=float).reshape(-1, 2)


def parse_page_xml(source) -> PageAnnotation:
    """Parse PAGE XML from bytes, a path, or a binary file object."""
    if isinstance(source, bytes):
        data = source
    elif hasattr(source, "read"):
        data = source.read()
    else:
        with open(os.fspath(source), "rb") as handle:
            data = handle.read()
    try:
        root = ET.fromstring(data)
    except ET.ParseError as exc:
        line, col = exc.position
        raise PageXmlError(f"XML parse error at line {line}, column {col}: {exc.msg}") from exc

    page = next((el for el in root.iter() if _local_name(el.tag) == "Page"), None)
    if page is None:
        raise PageXmlError("document contains no Page element")
    try:
        width = int(page.attrib["imageWidth"])
        height = int(page.attrib["imageHeight"])
    except (KeyError, ValueError) as exc:
        raise PageXmlError("Page element lacks integer imageWidth/imageHeight") from exc
    if width <= 0 or height <= 0:
        raise PageXmlError(f"Page dimensions must be positive, got {width}x{height}")

    warnings: list[str] = []
    lines: list[TextLineAnnotation] = []
    seen_ids: set[str] = set()
    for index, el in enumerate(e for e in root.iter() if _local_name(e.tag) == "TextLine"):
        line_id = el.attrib.get("id") or f"line_{index}"
        if line_id in seen_ids:
            unique = f"{line_id}_{index}"
            warnings.append(f"duplicate TextLine id {line_id!r} renamed to {unique!r}")
            line_id = unique
        seen_ids.add(line_id)

        polygon = None
        baseline = None
        for child in el:
            name = _local_name(child.tag)
            if name == "Coords" and "points" in child.attrib:
                pts = _parse_points(child.attrib["points"], f"TextLine {line_id} Coords")
                pts, clamped = _clamp_points(pts, width, height)
                if clamped:
                    warnings.append(
                        f"TextLine {line_id}: {clamped} polygon point(s) clamped to page bounds"
                    )
                if len(pts) >= 3:
                    polygon = pts
                else:
                    warnings.append(f"TextLine {line_id}: polygon with < 3 points ignored")
            elif name == "Baseline" and "points" in child.attrib:
                pts = _parse_points(child.attrib["points"], f"TextLine {line_id} Baseline")
                pts, clamped = _clamp_points(pts, width, height)
                if clamped:
                    warnings.append(
                        f"TextLine {line_id}: {clamped} baseline point(s) clamped to page bounds"
                    )
                if len(pts) >= 2:
                    distinct = np.concatenate([[True], (np.diff(pts, axis=0) != 0).any(axis=1)])
                    pts = pts[distinct]
                if len(pts) >= 2:
                    baseline = Polyline(pts)
                else:
                    warnings.append(f"TextLine {line_id}: degenerate baseline ignored")
        if polygon is None and baseline is None:
            warnings.append(f"TextLine {line_id}: no usable Coords or Baseline, skipped")
            continue
        lines.append(TextLineAnnotation(id=line_id, polygon=polygon, baseline=baseline))

    return PageAnnotation(
        width=width, height=height, lines=tuple(lines), warnings=tuple(warnings)
    )


def _clamp_points(pts: np.ndarray, width: int, height: int) -> tuple[np.ndarray, int]:
    clamped = np.clip(pts, [0.0, 0.0], [width - 1.0, height - 1.0])
    n_clamped = int((clamped != pts).any(axis=1).sum())
    return clamped, n_clamped


def _draw_segment(r0: int, c0: int, r1: int, c1: int, out: np.ndarray) -> None:
    """Bresenham line, endpoints included, clipped to the raster."""
    h, w = out.shape
    dr, dc = abs(r1 - r0), abs(c1 - c0)
    sr = 1 if r0 < r1 else -1
    sc = 1 if c0 < c1 else -1
    err = dc - dr
    r, c = r0, c0
    while True:
        if 0 <= r < h and 0 <= c < w:
            out[r, c] = True
        if r == r1 and c == c1:
            break
        e2 = 2 * err
        if e2 > -dr:
            err -= dr
            c += sc
        if e2 < dc:
            err += dc
            r += sr


def _fill_polygon(points: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Even-odd scanline fill plus the Bresenham outline (boundary included)."""
    out = np.zeros(shape, dtype=bool)
    h, w = shape
    closed = np.vstack([points, points[:1]])
    edges = [
        (closed[i, 0], closed[i, 1], closed[i + 1, 0], closed[i + 1, 1])
        for i in range(len(points))
    ]
    y_lo = max(0, int(np.ceil(points[:, 1].min())))
    y_hi = min(h - 1, int(np.floor(points[:, 1].max())))
    for y in range(y_lo, y_hi + 1):
        xs = []
        for xa, ya, xb, yb in edges:
            if ya == yb:
                continue
            ymin, ymax = (ya, yb) if ya < yb else (yb, ya)
            if ymin <= y < ymax:  # half-open so shared vertices count once
                t = (y - ya) / (yb - ya)
                xs.append(xa + t * (xb - xa))
        xs.sort()
        for i in range(0, len(xs) - 1, 2):
            a = max(0, int(np.ceil(xs[i])))
            b = min(w - 1, int(np.floor(xs[i + 1])))
            if a <= b:
                out[y, a : b + 1] = True
    ipts = np.rint(closed).astype(int)
    for i in range(len(points)):
        _draw_segment(ipts[i, 1], ipts[i, 0], ipts[i + 1, 1], ipts[i + 1, 0], out)
    return out


def _disk(radius: float) -> np.ndarray:
    r = int(np.floor(radius))
    if r <= 0:
        return np.ones((1, 1), dtype=bool)
    coords = np.arange(-r, r + 1)
    dy, dx = np.meshgrid(coords, coords, indexing="ij")
    return dy * dy + dx * dx <= radius * radius


@dataclass(frozen=True)
class Rasterization:
    """Label raster produced from an annotation, plus bookkeeping.

    Later lines overwrite earlier ones where annotations overlap;
    ``overlap_pixels`` counts the pixels touched by more than one line.
    """

    labels: np.ndarray
    overlap_pixels: int
    skipped: tuple[str, ...] = ()

    @property
    def mask(self) -> np.ndarray:
        return self.labels > 0


def rasterize(
    annotation: PageAnnotation,
    mode: str = "polygon",
    thickness: int = DEFAULT_BASELINE_THICKNESS,
) -> Rasterization:
    """Render an annotation to a label raster.

    ``polygon`` mode fills each line's polygon (even-odd rule); ``baseline``
    mode draws each baseline with the given stroke thickness. One label per
    line, in document order; lines lacking the required geometry are
    skipped and reported.
    """
    if mode not in ("polygon", "baseline"):
        raise ValueError(f"mode must be 'polygon' or 'baseline', got {mode!r}")
    if mode == "baseline" and thickness < 1:
        raise ValueError(f"thickness must be >= 1, got {thickness}")
    shape = (annotation.height, annotation.width)
    labels = np.zeros(shape, dtype=np.int32)
    touched = np.zeros(shape, dtype=np.int32)
    skipped = []
    next_label = 0
    structure = _disk((thickness - 1) / 2.0) if mode == "baseline" else None
    for line in annotation.lines:
        if mode == "polygon":
            if line.polygon is None:
                skipped.append(line.id)
                continue
            region = _fill_polygon(line.polygon, shape)
        else:
            if line.baseline is None:
                skipped.append(line.id)
                continue
            path = np.zeros(shape, dtype=bool)
            ipts = np.rint(line.baseline.points).astype(int)
            for i in range(len(ipts) - 1):
                _draw_segment(ipts[i, 1], ipts[i, 0], ipts[i + 1, 1], ipts[i + 1, 0], path)
            region = (
                ndimage.binary_dilation(path, structure=structure)
                if structure.shape != (1, 1)
                else path
            )
        next_label += 1
        labels[region] = next_label
        touched[region] += 1
    return Rasterization(
        labels=labels,
        overlap_pixels=int((touched > 1).sum()),
        skipped=tuple(skipped),
    )


def downsample(arr, factor: int = DEFAULT_DOWNSAMPLE_FACTOR) -> np.ndarray:
    """Reduce resolution by an integer factor.

    Boolean masks take a majority vote per block (ties become foreground);
    everything else is box-averaged. Output dimensions are ceil(dim/factor)
    and edge blocks may be partial.
    """
    arr = np.asarray(arr)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D raster, got shape {arr.shape}")
    if factor < 1:
        raise ValueError(f"factor must be >= 1, got {factor}")
    if factor == 1:
        return arr.copy()
    h, w = arr.shape
    row_idx = np.arange(0, h, factor)
    col_idx = np.arange(0, w, factor)
    values = arr.astype(np.int64) if arr.dtype == bool else arr.astype(np.float64)
    sums = np.add.reduceat(np.add.reduceat(values, row_idx, axis=0), col_idx, axis=1)
    row_sizes = np.diff(np.append(row_idx, h))
    col_sizes = np.diff(np.append(col_idx, w))
    counts = np.outer(row_sizes, col_sizes)
    if arr.dtype == bool:
        return 2 * sums >= counts
    return sums / counts


def read_mask(path) -> np.ndarray:
    """Read a binary mask PNG (8-bit grayscale; any nonzero = foreground)."""
    with Image.open(path) as im:
        if im.format != "PNG":
            raise MaskFormatError(f"unsupported image format {im.format!r}, need PNG")
        if im.mode != "L":
            raise MaskFormatError(
                f"unsupported PNG mode {im.mode!r}, need 8-bit single-channel 'L'"
            )
        arr = np.asarray(im)
    return arr > 0


def write_mask(path, mask) -> None:
    """Write a binary mask as an 8-bit grayscale PNG (foreground = 255)."""
    mask = check_mask(mask)
    Image.fromarray(np.where(mask, 255, 0).astype(np.uint8), mode="L").save(
        path, format="PNG"
    )


def read_prob_map(path) -> np.ndarray:
    """Read an 8-bit grayscale PNG as probabilities in [0, 1] (value / 255)."""
    with Image.open(path) as im:
        if im.format != "PNG":
            raise MaskFormatError(f"unsupported image format {im.format!r}, need PNG")
        if im.mode != "L":
            raise MaskFormatError(
                f"unsupported PNG mode {im.mode!r}, need 8-bit single-channel 'L'"
            )
        arr = np.asarray(im)
    return arr.astype(np.float64) / 255.0


def write_prob_map(path, probs) -> None:
    """Write probabilities as an 8-bit grayscale PNG (rounded to value * 255)."""
    probs = check_prob_map(probs)
    Image.fromarray(np.rint(probs * 255.0).astype(np.uint8), mode="L").save(
        path, format="PNG"
    )


@dataclass(frozen=True)
class ManifestEntry:
    image: str
    gt: str
    split: str
    manuscript: str


@dataclass(frozen=True)
class DatasetManifest:
    """Dataset file list with an optional per-manuscript training budget."""

    entries: tuple[ManifestEntry, ...]
    few_shot_budget: int | None = None

    def __post_init__(self):
        for entry in self.entries:
            if entry.split not in SPLITS:
                raise ValueError(
                    f"invalid split {entry.split!r} for {entry.image!r}; "
                    f"expected one of {SPLITS}"
                )
        if self.few_shot_budget is not None:
            counts: dict[str, int] = {}
            for entry in self.entries:
                if entry.split == "train":
                    counts[entry.manuscript] = counts.get(entry.manuscript, 0) + 1
            for manuscript, count in sorted(counts.items()):
                if count > self.few_shot_budget:
                    raise ValueError(
                        f"manuscript {manuscript!r} has {count} train pages, "
                        f"exceeding the few-shot budget of {self.few_shot_budget}"
                    )


def read_manifest(path, few_shot_budget: int | None = None) -> DatasetManifest:
    """Read a tab-separated manifest: image, gt, split, manuscript per line."""
    entries = []
    with open(os.fspath(path), "r", encoding="utf-8") as handle:
        for lineno, raw in enumerate(handle, start=1):
            row = raw.rstrip("\n")
            if not row:
                continue
            fields = row.split("\t")
            if len(fields) != 4:
                raise ValueError(
                    f"{path}: line {lineno}: expected 4 tab-separated fields, "
                    f"got {len(fields)}"
                )
            entries.append(ManifestEntry(*fields))
    return DatasetManifest(entries=tuple(entries), few_shot_budget=few_shot_budget)


def write_manifest(manifest: DatasetManifest, path) -> None:
    with open(os.fspath(path), "w", encoding="utf-8", newline="\n") as handle:
        for entry in manifest.entries:
            handle.write(f"{entry.image}\t{entry.gt}\t{entry.split}\t{entry.manuscript}\n")
