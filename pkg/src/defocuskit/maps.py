"""Dense per-pixel maps with validity masks, and raster helpers.

Rasters are plain float64 numpy arrays shaped ``(H, W)`` or ``(H, W, C)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DataError


@dataclass
class MaskedMap:
    values: np.ndarray
    valid: Optional[np.ndarray] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise DataError(f"map must be 2-D, got shape {self.values.shape}")
        if self.valid is None:
            self.valid = np.isfinite(self.values)
        else:
            self.valid = np.asarray(self.valid, dtype=bool)
            if self.valid.shape != self.values.shape:
                raise DataError("mask shape does not match values")

    @property
    def shape(self):
        return self.values.shape

    @property
    def fully_valid(self) -> bool:
        return bool(self.valid.all())

    def filled(self, fill=np.nan) -> np.ndarray:
        """Values with invalid pixels replaced by ``fill``."""
        return np.where(self.valid, self.values, fill)

    def __eq__(self, other):
        if type(other) is not type(self):
            return NotImplemented
        return (
            np.array_equal(self.valid, other.valid)
            and np.array_equal(self.filled(0.0), other.filled(0.0))
        )


class DepthMap(MaskedMap):
    """Depth in millimeters."""


class DefocusMap(MaskedMap):
    """CoC diameter in pixels."""


def as_raster(image, name="image") -> np.ndarray:
    """Validate an image and return it as a float64 ``(H, W, C)`` array."""
    a = np.asarray(image, dtype=np.float64)
    if a.ndim == 2:
        a = a[:, :, None]
    if a.ndim != 3 or a.shape[0] < 1 or a.shape[1] < 1 or a.shape[2] < 1:
        raise DataError(f"{name} must be HxW or HxWxC, got shape {a.shape}")
    if not np.isfinite(a).all():
        raise DataError(f"{name} contains non-finite values")
    return a


def luma(image) -> np.ndarray:
    """Rec.601 luma of an RGB raster; single-channel input passes through."""
    a = as_raster(image)
    if a.shape[2] == 1:
        return a[:, :, 0]
    if a.shape[2] != 3:
        raise DataError(f"expected 1 or 3 channels, got {a.shape[2]}")
    return 0.299 * a[:, :, 0] + 0.587 * a[:, :, 1] + 0.114 * a[:, :, 2]
