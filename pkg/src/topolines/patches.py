"""Patch extraction for training, regular tiling and Gaussian-weighted stitching.

Full pages are processed as overlapping square patches. For training,
patches are random crops with small random rotation and shear so that
non-horizontal lines are seen; for inference, a regular grid of
overlapping patches is predicted independently and blended back with a
2-D Gaussian weight window that emphasizes each patch's center.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import ndimage

from .validation import check_mask

DEFAULT_PATCH_SIZE = 448
DEFAULT_ROTATION_RANGE = 5.0
DEFAULT_SHEAR_RANGE = 3.0


@dataclass(frozen=True)
class TileGrid:
    """Top-left patch offsets covering a full image."""

    positions: tuple[tuple[int, int], ...]
    size: int
    stride: int

    def __iter__(self):
        return iter(self.positions)

    def __len__(self) -> int:
        return len(self.positions)


def _axis_positions(dim: int, size: int, stride: int) -> list[int]:
    last = dim - size
    positions = list(range(0, last + 1, stride))
    if positions[-1] != last:
        positions.append(last)
    return positions


def tile_patches(width: int, height: int, size: int = DEFAULT_PATCH_SIZE,
                 stride: int | None = None) -> TileGrid:
    """Regular patch grid; the last row/column is clamped to the border.

    Default stride is size // 2 (50% overlap).
    """
    if stride is None:
        stride = size // 2
    if size <= 0 or stride <= 0:
        raise ValueError(f"size and stride must be > 0, got size={size} stride={stride}")
    if stride > size:
        raise ValueError(f"stride {stride} must not exceed patch size {size}")
    if size > min(width, height):
        raise ValueError(
            f"patch size {size} exceeds image dimensions {width}x{height}"
        )
    xs = _axis_positions(width, size, stride)
    ys = _axis_positions(height, size, stride)
    return TileGrid(
        positions=tuple((x, y) for y in ys for x in xs),
        size=size,
        stride=stride,
    )


def gaussian_window(size: int, sigma: float | None = None) -> np.ndarray:
    """Unnormalized 2-D Gaussian weight window, 1.0 at the center.

    Default sigma is size / 4, which keeps border weights strictly
    positive while strongly down-weighting them against the center.
    """
    if size <= 0:
        raise ValueError(f"size must be > 0, got {size}")
    if sigma is None:
        sigma = size / 4.0
    if sigma <= 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    center = (size - 1) / 2.0
    profile = np.exp(-((np.arange(size) - center) ** 2) / (2.0 * sigma * sigma))
    return np.outer(profile, profile)


def stitch(
    patches: Sequence[np.ndarray],
    positions: Sequence[tuple[int, int]],
    width: int,
    height: int,
    window: np.ndarray | None = None,
) -> np.ndarray:
    """Blend overlapping patch predictions into one full-size map.

    Each pixel is the window-weighted average of the patches covering it.
    Weights are normalized per pixel, so a pixel covered by a single
    patch reproduces that patch's value exactly. Input order does not
    matter: accumulation runs in a fixed position order.
    """
    if len(patches) != len(positions):
        raise ValueError(
            f"got {len(patches)} patches but {len(positions)} positions"
        )
    if not patches:
        raise ValueError("at least one patch is required")
    size = patches[0].shape[0]
    for patch in patches:
        if patch.shape != (size, size):
            raise ValueError(
                f"all patches must be square and equally sized, got {patch.shape} vs {size}"
            )
    if window is None:
        window = gaussian_window(size)
    if window.shape != (size, size):
        raise ValueError(f"window shape {window.shape} does not match patch size {size}")
    if (window <= 0).any():
        raise ValueError("window weights must be strictly positive")

    order = sorted(range(len(patches)), key=lambda i: (positions[i][1], positions[i][0]))
    for i in order:
        x, y = positions[i]
        if x < 0 or y < 0 or x + size > width or y + size > height:
            raise ValueError(
                f"patch at ({x}, {y}) with size {size} exceeds the {width}x{height} frame"
            )

    weight_sum = np.zeros((height, width))
    for i in order:
        x, y = positions[i]
        weight_sum[y : y + size, x : x + size] += window

    uncovered = np.argwhere(weight_sum == 0)
    if len(uncovered):
        sample = ", ".join(f"({x}, {y})" for y, x in uncovered[:5])
        raise ValueError(
            f"{len(uncovered)} pixel(s) not covered by any patch, e.g. {sample}"
        )

    out = np.zeros((height, width))
    for i in order:
        x, y = positions[i]
        region = (slice(y, y + size), slice(x, x + size))
        out[region] += (window / weight_sum[region]) * patches[i]
    return np.clip(out, 0.0, 1.0)


def _affine_matrices(theta_deg: float, shear_deg: float) -> np.ndarray:
    """Output-offset -> input-offset matrix in (row, col) coordinates."""
    theta = np.radians(theta_deg)
    shear = np.radians(shear_deg)
    # In (x, y): rotation followed by a horizontal shear (x += y * tan(shear)).
    rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    shr = np.array([[1.0, np.tan(shear)], [0.0, 1.0]])
    a = rot @ shr
    # Swap axes: ndimage indexes (row, col) = (y, x).
    return np.array([[a[1, 1], a[1, 0]], [a[0, 1], a[0, 0]]])


def sample_training_patches(
    image,
    gt,
    n: int,
    size: int = DEFAULT_PATCH_SIZE,
    rotation_range: float = DEFAULT_ROTATION_RANGE,
    shear_range: float = DEFAULT_SHEAR_RANGE,
    seed: int | None = None,
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Sample augmented (image patch, ground-truth patch) pairs.

    Each patch is a random crop warped by a rotation drawn uniformly from
    [-rotation_range, +rotation_range] degrees and a shear drawn from
    [-shear_range, +shear_range] degrees, both about the crop center,
    with reflected borders. The image is interpolated bilinearly, the
    mask with nearest-neighbor so it stays binary. Deterministic for a
    fixed seed.
    """
    image = np.asarray(image, dtype=np.float64)
    gt = check_mask(gt, "ground truth")
    if image.ndim != 2:
        raise ValueError(f"image must be 2-D, got shape {image.shape}")
    if image.shape != gt.shape:
        raise ValueError(
            f"image shape {image.shape} does not match ground truth shape {gt.shape}"
        )
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if size <= 0:
        raise ValueError(f"size must be > 0, got {size}")
    if rotation_range < 0 or shear_range < 0:
        raise ValueError("rotation_range and shear_range must be >= 0")
    h, w = image.shape
    if h < size or w < size:
        raise ValueError(
            f"image {w}x{h} is smaller than the patch size {size}; "
            "pad the inputs first (padding is the caller's responsibility)"
        )

    rng = np.random.default_rng(seed)
    gt_int = gt.astype(np.uint8)
    out = []
    for _ in range(n):
        tx = int(rng.integers(0, w - size + 1))
        ty = int(rng.integers(0, h - size + 1))
        theta = float(rng.uniform(-rotation_range, rotation_range))
        shear = float(rng.uniform(-shear_range, shear_range))

        matrix = _affine_matrices(theta, shear)
        center_out = np.array([(size - 1) / 2.0, (size - 1) / 2.0])
        center_in = np.array([ty + (size - 1) / 2.0, tx + (size - 1) / 2.0])
        offset = center_in - matrix @ center_out

        img_patch = ndimage.affine_transform(
            image, matrix, offset=offset, output_shape=(size, size),
            order=1, mode="reflect",
        )
        gt_patch = ndimage.affine_transform(
            gt_int, matrix, offset=offset, output_shape=(size, size),
            order=0, mode="reflect",
        )
        out.append((img_patch, gt_patch > 0))
    return out
