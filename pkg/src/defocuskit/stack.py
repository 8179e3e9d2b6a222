"""Shape from focus: all-in-focus compositing, depth from a focus stack, and
filling unsolved depth pixels."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List

import numpy as np
from scipy import ndimage

from .errors import DataError, DomainError
from .maps import DepthMap, as_raster, luma

LAPLACIAN = np.array([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]])


@dataclass
class FocusStack:
    members: List[np.ndarray]
    focus_depths_mm: List[float] = field(default_factory=list)

    def __post_init__(self):
        if len(self.members) < 1:
            raise DataError("focus stack is empty")
        if len(self.members) != len(self.focus_depths_mm):
            raise DataError("one focus depth per stack member required")
        shape = np.shape(self.members[0])
        if any(np.shape(m) != shape for m in self.members):
            raise DataError("stack members differ in shape")
        fd = self.focus_depths_mm
        if any(b <= a for a, b in zip(fd, fd[1:])):
            raise DataError("focus depths must be strictly increasing")

    def __len__(self):
        return len(self.members)

    def __getitem__(self, t):
        return self.members[t]


def focus_measure(image, window_px: int = 9) -> np.ndarray:
    """Windowed sum of the absolute Laplacian of the image's luma.

    Both the Laplacian and the box sum use replicate padding.
    """
    if window_px < 1 or window_px % 2 == 0:
        raise DomainError(f"window must be a positive odd integer, got {window_px}")
    lap = np.abs(ndimage.correlate(luma(image), LAPLACIAN, mode="nearest"))
    if window_px == 1:
        return lap
    return ndimage.correlate(lap, np.ones((window_px, window_px)), mode="nearest")


def focus_index(stack: FocusStack, window_px: int = 9) -> np.ndarray:
    """Per-pixel index of the sharpest member; ties go to the lowest index."""
    measures = np.stack([focus_measure(m, window_px) for m in stack.members])
    return np.argmax(measures, axis=0)


def compose_all_in_focus(stack: FocusStack, window_px: int = 9):
    """All-in-focus raster and shape-from-focus depth from a focus stack.

    Returns ``(image, depth)``. The depth map only takes values from
    ``stack.focus_depths_mm``; there is no sub-step interpolation.
    """
    if len(stack) < 2:
        raise DataError("compositing needs at least two stack members")
    ids = focus_index(stack, window_px)
    cube = np.stack([as_raster(m) for m in stack.members])
    rows, cols = np.indices(ids.shape)
    image = cube[ids, rows, cols]
    if np.ndim(stack.members[0]) == 2:
        image = image[:, :, 0]
    depth = np.asarray(stack.focus_depths_mm, dtype=np.float64)[ids]
    return image, DepthMap(depth, np.ones(ids.shape, dtype=bool))


def detect_invalid(depth: DepthMap) -> np.ndarray:
    """Mask of pixels that are non-finite, nonpositive or already invalid."""
    with np.errstate(invalid="ignore"):
        ok = np.isfinite(depth.values) & (depth.values > 0)
    return ~(ok & depth.valid)


def refine_depth(depth_primary: DepthMap, invalid: np.ndarray, depth_fill: DepthMap) -> DepthMap:
    """Replace masked pixels of ``depth_primary`` by ``depth_fill``."""
    invalid = np.asarray(invalid, dtype=bool)
    if not (depth_primary.shape == invalid.shape == depth_fill.shape):
        raise DataError("depth maps and mask must share a shape")
    fill_ok = ~detect_invalid(depth_fill)
    bad = invalid & ~fill_ok
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise DataError(f"fill depth is invalid at masked pixel ({i}, {j})")
    keep_bad = ~invalid & detect_invalid(depth_primary)
    if keep_bad.any():
        i, j = np.argwhere(keep_bad)[0]
        raise DataError(f"primary depth is invalid at unmasked pixel ({i}, {j})")
    values = np.where(invalid, depth_fill.values, depth_primary.values)
    return DepthMap(values, np.ones(values.shape, dtype=bool))
