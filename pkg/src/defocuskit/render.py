"""Synthetic focused images by per-pixel Gaussian PSF splatting.

Every source pixel spreads its intensity over a truncated isotropic Gaussian
whose width is its own CoC. Each destination is normalized by the total
weight it received, so constant images are fixed points and weight lost at
the image border or to truncation does not darken the result.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numba
import numpy as np

from .errors import DataError, DomainError
from .maps import DepthMap, as_raster
from .optics import FocusSetting, LensConfig, defocus_map_from_depth


@dataclass(frozen=True)
class RenderOptions:
    truncation_sigmas: float = 3.0
    max_kernel_radius_px: int = 64
    min_sigma_px: float = 0.25
    # sigma = coc_to_sigma * CoC diameter; 0.5 reads the CoC diameter as a radius
    coc_to_sigma: float = 1.0

    def __post_init__(self):
        if not self.truncation_sigmas >= 1:
            raise DomainError("truncation_sigmas must be >= 1")
        if int(self.max_kernel_radius_px) != self.max_kernel_radius_px or self.max_kernel_radius_px < 1:
            raise DomainError("max_kernel_radius_px must be an integer >= 1")
        if not self.min_sigma_px >= 0:
            raise DomainError("min_sigma_px must be >= 0")
        if not self.coc_to_sigma > 0:
            raise DomainError("coc_to_sigma must be positive")


def gaussian_weight(dx, dy, sigma):
    """Isotropic 2-D Gaussian density at offset ``(dx, dy)``."""
    sigma = np.asarray(sigma, dtype=np.float64)
    if np.any(~(sigma > 0)):
        raise DomainError("sigma must be positive")
    s2 = sigma * sigma
    w = np.exp(-(np.square(dx) + np.square(dy)) / (2.0 * s2)) / (2.0 * math.pi * s2)
    return w if np.ndim(w) else float(w)


def kernel_radius(sigma: float, opts: RenderOptions = RenderOptions()) -> int:
    if sigma < opts.min_sigma_px or sigma <= 0:
        return 0
    return min(math.ceil(opts.truncation_sigmas * sigma), int(opts.max_kernel_radius_px))


def _radii(sigma: np.ndarray, opts: RenderOptions) -> np.ndarray:
    r = np.ceil(opts.truncation_sigmas * sigma)
    r = np.minimum(r, opts.max_kernel_radius_px).astype(np.int64)
    r[(sigma < opts.min_sigma_px) | (sigma <= 0)] = 0
    return r


@numba.njit(nogil=True, cache=True)
def _splat_band(planes, sigma, radius, r_max, y0, y1, acc, wsum):
    """Accumulate every source's contribution to destination rows [y0, y1).

    ``planes`` and ``acc`` are channel-first. Sources are visited in row-major
    order, so each destination sums its contributions in the same order
    however the rows are banded.
    """
    C, H, W = planes.shape
    wx = np.empty(2 * r_max + 1)
    wrow = np.empty(2 * r_max + 1)
    src_lo = max(0, y0 - r_max)
    src_hi = min(H, y1 + r_max)
    for i in range(src_lo, src_hi):
        for j in range(W):
            r = radius[i, j]
            if r == 0:
                if y0 <= i < y1:
                    for c in range(C):
                        acc[c, i - y0, j] += planes[c, i, j]
                    wsum[i - y0, j] += 1.0
                continue
            ylo = max(i - r, y0)
            yhi = min(i + r + 1, y1)
            if ylo >= yhi:
                continue
            s = sigma[i, j]
            inv2s2 = 1.0 / (2.0 * s * s)
            norm = 1.0 / (2.0 * math.pi * s * s)
            xlo = max(j - r, 0)
            n = min(j + r + 1, W) - xlo
            for k in range(n):
                d = xlo + k - j
                wx[k] = math.exp(-d * d * inv2s2)
            for y in range(ylo, yhi):
                d = y - i
                wy = norm * math.exp(-d * d * inv2s2)
                row = y - y0
                for k in range(n):
                    wrow[k] = wy * wx[k]
                ws = wsum[row]
                for k in range(n):
                    ws[xlo + k] += wrow[k]
                for c in range(C):
                    v = planes[c, i, j]
                    a = acc[c, row]
                    for k in range(n):
                        a[xlo + k] += wrow[k] * v


def _bands(H: int, threads: int):
    n = max(1, min(int(threads), H))
    edges = np.linspace(0, H, n + 1).round().astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def render_with_sigma(image, sigma: np.ndarray, opts: RenderOptions = RenderOptions(), threads: int = 1) -> np.ndarray:
    """Splat ``image`` with a per-pixel Gaussian width map ``sigma`` (pixels)."""
    squeeze = np.ndim(image) == 2
    img = np.ascontiguousarray(as_raster(image))
    sigma = np.ascontiguousarray(sigma, dtype=np.float64)
    if sigma.shape != img.shape[:2]:
        raise DataError(f"sigma map shape {sigma.shape} does not match image {img.shape[:2]}")
    if not np.isfinite(sigma).all() or (sigma < 0).any():
        raise DataError("sigma map must be finite and nonnegative")
    radius = _radii(sigma, opts)
    r_max = int(radius.max())
    H, W, C = img.shape
    planes = np.ascontiguousarray(np.moveaxis(img, 2, 0))
    acc = np.zeros((C, H, W))
    wsum = np.zeros((H, W))

    def work(band):
        y0, y1 = band
        band_acc = np.zeros((C, y1 - y0, W))
        band_w = np.zeros((y1 - y0, W))
        _splat_band(planes, sigma, radius, r_max, y0, y1, band_acc, band_w)
        acc[:, y0:y1] = band_acc
        wsum[y0:y1] = band_w

    bands = _bands(H, threads)
    if len(bands) == 1:
        work(bands[0])
    else:
        with ThreadPoolExecutor(max_workers=len(bands)) as pool:
            list(pool.map(work, bands))
    out = np.moveaxis(acc / wsum, 0, 2)
    return out[:, :, 0].copy() if squeeze else np.ascontiguousarray(out)


def sigma_map(depth: DepthMap, setting: FocusSetting, lens: LensConfig, opts: RenderOptions = RenderOptions()) -> np.ndarray:
    if not depth.fully_valid:
        raise DataError("depth map has invalid pixels; refine it first")
    return defocus_map_from_depth(depth, setting, lens).values * opts.coc_to_sigma


def render_focused(
    all_in_focus,
    depth: DepthMap,
    setting: FocusSetting,
    lens: LensConfig,
    opts: RenderOptions = RenderOptions(),
    threads: int = 1,
) -> np.ndarray:
    """Focused image of an all-in-focus raster at ``setting``.

    Output has the same shape as ``all_in_focus``. Pixels at the focus depth
    pass through unchanged when the whole map is in focus.
    """
    img = np.asarray(all_in_focus)
    if img.shape[:2] != depth.shape:
        raise DataError(f"image {img.shape[:2]} and depth {depth.shape} differ in size")
    return render_with_sigma(img, sigma_map(depth, setting, lens, opts), opts, threads)


def render_stack(
    all_in_focus,
    depth: DepthMap,
    focus_depths,
    lens: LensConfig,
    opts: RenderOptions = RenderOptions(),
    threads: int = 1,
):
    from .stack import FocusStack

    fds = [float(f) for f in focus_depths]
    if not fds:
        raise DomainError("need at least one focus depth")
    if any(b <= a for a, b in zip(fds, fds[1:])):
        raise DomainError("focus depths must be strictly increasing")
    if fds[0] <= lens.focal_length_mm:
        raise DomainError("focus depths must exceed the focal length")
    members = [
        render_focused(all_in_focus, depth, FocusSetting(fd), lens, opts, threads) for fd in fds
    ]
    return FocusStack(members, fds)
