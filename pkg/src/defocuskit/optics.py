"""Thin-lens geometry and circle-of-confusion (CoC) size.

Depths and lengths are millimeters, CoC sizes are pixels.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DataError, DomainError
from .maps import DefocusMap, DepthMap

#: Calibrated lens of the reference capture rig: 50 mm at f/1.4 with A = 800.
RIG_FOCAL_MM = 50.0
RIG_F_NUMBER = 1.4
RIG_COC_SCALE = 800.0


@dataclass(frozen=True)
class LensConfig:
    """Optical constants of a camera.

    ``coc_scale`` is the combined factor ``A = aperture / (pixel_size * output_scale)``
    with ``aperture = focal_length / f_number``. Supply either ``coc_scale``
    directly or both ``pixel_size_mm`` and ``output_scale``.
    """

    focal_length_mm: float = RIG_FOCAL_MM
    f_number: float = RIG_F_NUMBER
    pixel_size_mm: Optional[float] = None
    output_scale: Optional[float] = None
    coc_scale: Optional[float] = None
    coc_scale_explicit: bool = field(default=False, init=False)

    def __post_init__(self):
        if not self.focal_length_mm > 0 or not self.f_number > 0:
            raise DomainError("focal length and f-number must be positive")
        for name in ("pixel_size_mm", "output_scale", "coc_scale"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise DomainError(f"{name} must be positive, got {value}")
        if self.coc_scale is not None:
            object.__setattr__(self, "coc_scale", float(self.coc_scale))
            object.__setattr__(self, "coc_scale_explicit", True)
            return
        if self.pixel_size_mm is None or self.output_scale is None:
            raise DomainError("need coc_scale or both pixel_size_mm and output_scale")
        object.__setattr__(
            self, "coc_scale", self.aperture_mm / (self.pixel_size_mm * self.output_scale)
        )

    @property
    def aperture_mm(self) -> float:
        return self.focal_length_mm / self.f_number

    @classmethod
    def reference_rig(cls) -> "LensConfig":
        return cls(RIG_FOCAL_MM, RIG_F_NUMBER, coc_scale=RIG_COC_SCALE)

    def to_dict(self) -> dict:
        d = {"focal_length_mm": self.focal_length_mm, "f_number": self.f_number}
        if self.coc_scale_explicit:
            d["coc_scale"] = self.coc_scale
        else:
            d["pixel_size_mm"] = self.pixel_size_mm
            d["output_scale"] = self.output_scale
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LensConfig":
        return cls(
            d["focal_length_mm"],
            d["f_number"],
            pixel_size_mm=d.get("pixel_size_mm"),
            output_scale=d.get("output_scale"),
            coc_scale=d.get("coc_scale"),
        )


@dataclass(frozen=True)
class FocusSetting:
    """Focus depth of a shot, optionally with the lens-to-sensor distance."""

    focus_depth_mm: float
    sensor_distance_mm: Optional[float] = None

    @classmethod
    def from_sensor(cls, sensor_distance_mm: float, lens: LensConfig) -> "FocusSetting":
        depth = focus_depth_from_sensor(sensor_distance_mm, lens.focal_length_mm)
        return cls(depth, sensor_distance_mm)

    def check(self, lens: LensConfig) -> None:
        F = lens.focal_length_mm
        if not self.focus_depth_mm > F:
            raise DomainError(
                f"focus depth {self.focus_depth_mm} mm must exceed focal length {F} mm"
            )
        if self.sensor_distance_mm is not None:
            lhs = 1.0 / self.focus_depth_mm + 1.0 / self.sensor_distance_mm
            if abs(lhs - 1.0 / F) > 1e-9 / F:
                raise DomainError("focus depth and sensor distance violate the lens equation")


def focus_depth_from_sensor(v: float, F: float) -> float:
    """Object distance in focus for a sensor at distance ``v`` behind the lens."""
    if not F > 0 or not v > F:
        raise DomainError(f"sensor distance {v} must exceed focal length {F} > 0")
    return v * F / (v - F)


def sensor_from_focus_depth(D_f: float, F: float) -> float:
    if not F > 0 or not D_f > F:
        raise DomainError(f"focus depth {D_f} must exceed focal length {F} > 0")
    return D_f * F / (D_f - F)


def _coc(depth, focus_depth_mm, lens):
    F = lens.focal_length_mm
    return lens.coc_scale * (np.abs(depth - focus_depth_mm) / depth) * (F / (focus_depth_mm - F))


def coc_pixels(D_gt: float, setting: FocusSetting, lens: LensConfig) -> float:
    """CoC diameter in pixels of a point at depth ``D_gt`` for the given focus.

    The value is not clamped; it can exceed the image size for extreme defocus.
    """
    if not D_gt > 0 or not math.isfinite(D_gt):
        raise DomainError(f"depth must be positive and finite, got {D_gt}")
    setting.check(lens)
    return float(_coc(float(D_gt), float(setting.focus_depth_mm), lens))


def defocus_map_from_depth(
    depth: DepthMap, setting: FocusSetting, lens: LensConfig
) -> DefocusMap:
    """Per-pixel CoC diameter; pixels invalid in ``depth`` stay invalid."""
    setting.check(lens)
    valid = depth.valid
    bad = valid & ~(np.isfinite(depth.values) & (depth.values > 0))
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise DataError(
            f"depth pixel ({i}, {j}) is marked valid but holds {depth.values[i, j]!r}"
        )
    values = np.full(depth.shape, np.nan)
    values[valid] = _coc(depth.values[valid], float(setting.focus_depth_mm), lens)
    return DefocusMap(values, valid.copy())
