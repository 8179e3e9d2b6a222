"""Scene I/O: rasters, depth and defocus maps, and the on-disk scene layout.

A scene directory looks like::

    <scene>/manifest.json
    <scene>/aif.png            (or aif.pfm)
    <scene>/depth.pfm
    <scene>/shots/000_img.png
    <scene>/shots/000_defocus.pfm
    ...
"""
from __future__ import annotations

import json
import os
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import List

import cv2
import numpy as np

from .errors import DataError, FormatError
from .maps import DefocusMap, DepthMap, as_raster
from .optics import FocusSetting, LensConfig, defocus_map_from_depth
from .render import RenderOptions, render_focused

SCHEMA_VERSION = 1


# --- PFM -------------------------------------------------------------------

def read_pfm(path) -> np.ndarray:
    """Read a PFM file as a top-to-bottom float32 array, ``(H, W)`` or ``(H, W, 3)``."""
    with open(path, "rb") as f:
        data = f.read()
    m = re.match(rb"(P[Ff])\s+(\d+)\s+(\d+)\s+(\S+)\s", data)
    if not m:
        raise FormatError(f"{path}: not a PFM file or corrupt header")
    channels = 3 if m.group(1) == b"PF" else 1
    width, height = int(m.group(2)), int(m.group(3))
    try:
        scale = float(m.group(4))
    except ValueError:
        raise FormatError(f"{path}: bad PFM scale {m.group(4)!r}") from None
    if scale == 0 or width < 1 or height < 1:
        raise FormatError(f"{path}: bad PFM header")
    dtype = "<f4" if scale < 0 else ">f4"
    n = width * height * channels
    body = data[m.end():]
    if len(body) < 4 * n:
        raise FormatError(f"{path}: truncated PFM data")
    a = np.frombuffer(body, dtype=dtype, count=n).astype(np.float32)
    shape = (height, width, 3) if channels == 3 else (height, width)
    return np.flipud(a.reshape(shape)).copy()


def write_pfm(path, array) -> None:
    """Write a little-endian PFM (scale -1.0). Values are stored as float32."""
    a = np.asarray(array)
    if a.ndim == 3 and a.shape[2] == 1:
        a = a[:, :, 0]
    if a.ndim == 2:
        tag = b"Pf"
    elif a.ndim == 3 and a.shape[2] == 3:
        tag = b"PF"
    else:
        raise FormatError(f"PFM holds 1 or 3 channels, got shape {a.shape}")
    h, w = a.shape[:2]
    body = np.ascontiguousarray(np.flipud(a), dtype="<f4").tobytes()
    with open(path, "wb") as f:
        f.write(tag + b"\n%d %d\n-1.0\n" % (w, h))
        f.write(body)


# --- rasters ---------------------------------------------------------------

def _ext(path) -> str:
    return Path(path).suffix.lower()


def load_raster(path) -> np.ndarray:
    """Load a PNG (8/16-bit, mapped to [0, 1]) or PFM image as ``(H, W, C)`` float64."""
    ext = _ext(path)
    if ext == ".pfm":
        return as_raster(read_pfm(path), str(path))
    if ext != ".png":
        raise FormatError(f"{path}: unsupported raster format {ext!r}")
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    a = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if a is None:
        raise FormatError(f"{path}: could not decode PNG")
    if a.dtype == np.uint8:
        scale = 255.0
    elif a.dtype == np.uint16:
        scale = 65535.0
    else:
        raise FormatError(f"{path}: unsupported PNG sample type {a.dtype}")
    if a.ndim == 3:
        if a.shape[2] == 4:
            a = a[:, :, :3]
        a = a[:, :, ::-1]
    return as_raster(a.astype(np.float64) / scale, str(path))


def save_raster(raster, path, bit_depth: int = 16) -> None:
    """Save to PNG (values clipped to [0, 1], 8 or 16 bit) or PFM by extension."""
    a = as_raster(raster)
    ext = _ext(path)
    if ext == ".pfm":
        write_pfm(path, a)
        return
    if ext != ".png":
        raise FormatError(f"{path}: unsupported raster format {ext!r}")
    if a.shape[2] not in (1, 3):
        raise FormatError("PNG output needs 1 or 3 channels")
    if bit_depth not in (8, 16):
        raise FormatError("PNG bit depth must be 8 or 16")
    top = 255 if bit_depth == 8 else 65535
    q = np.rint(np.clip(a, 0.0, 1.0) * top).astype(np.uint8 if bit_depth == 8 else np.uint16)
    q = q[:, :, 0] if q.shape[2] == 1 else q[:, :, ::-1]
    if not cv2.imwrite(str(path), np.ascontiguousarray(q)):
        raise OSError(f"could not write {path}")


# --- depth / defocus -------------------------------------------------------

def load_depth(path, unit_scale: float = 1.0) -> DepthMap:
    """16-bit PNG holds ``round(mm / unit_scale)`` with 0 meaning invalid; PFM holds mm, NaN invalid."""
    ext = _ext(path)
    if ext == ".pfm":
        v = read_pfm(path)
        if v.ndim != 2:
            raise FormatError(f"{path}: depth must be single channel")
        v = v.astype(np.float64)
        return DepthMap(v, np.isfinite(v))
    if ext != ".png":
        raise FormatError(f"{path}: unsupported depth format {ext!r}")
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    a = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if a is None or a.ndim != 2 or a.dtype != np.uint16:
        raise FormatError(f"{path}: depth PNG must be 16-bit single channel")
    valid = a > 0
    return DepthMap(np.where(valid, a * float(unit_scale), np.nan), valid)


def save_depth(depth: DepthMap, path, unit_scale: float = 1.0) -> None:
    ext = _ext(path)
    if ext == ".pfm":
        write_pfm(path, depth.filled(np.nan))
        return
    if ext != ".png":
        raise FormatError(f"{path}: unsupported depth format {ext!r}")
    q = np.rint(depth.filled(0.0) / unit_scale)
    if (q[depth.valid] < 1).any() or (q > 65535).any():
        raise DataError("depth does not fit in 16-bit PNG at this unit scale")
    q[~depth.valid] = 0
    if not cv2.imwrite(str(path), q.astype(np.uint16)):
        raise OSError(f"could not write {path}")


def load_defocus(path) -> DefocusMap:
    if _ext(path) != ".pfm":
        raise FormatError(f"{path}: defocus maps are stored as PFM")
    v = read_pfm(path).astype(np.float64)
    if v.ndim != 2:
        raise FormatError(f"{path}: defocus map must be single channel")
    return DefocusMap(v, np.isfinite(v))


def save_defocus(defocus: DefocusMap, path) -> None:
    if _ext(path) != ".pfm":
        raise FormatError(f"{path}: defocus maps are stored as PFM")
    write_pfm(path, defocus.filled(np.nan))


# --- scenes ----------------------------------------------------------------

@dataclass
class Shot:
    focused_image_path: str
    focus_depth_mm: float
    defocus_map_path: str


@dataclass
class SceneManifest:
    """Paths are relative to ``root`` (the scene directory)."""

    scene_id: str
    lens: LensConfig
    depth_path: str
    all_in_focus_path: str
    shots: List[Shot] = field(default_factory=list)
    depth_unit_scale: float = 1.0
    root: str = "."

    def path(self, rel) -> Path:
        return Path(self.root) / rel

    def to_json(self) -> str:
        d = {
            "schema_version": SCHEMA_VERSION,
            "scene_id": self.scene_id,
            "lens": self.lens.to_dict(),
            "depth_path": self.depth_path,
            "all_in_focus_path": self.all_in_focus_path,
            "depth_unit_scale": self.depth_unit_scale,
            "shots": [vars(s) for s in self.shots],
        }
        return json.dumps(d, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str, root=".") -> "SceneManifest":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as e:
            raise FormatError(f"manifest is not valid JSON: {e}") from None
        if d.get("schema_version") != SCHEMA_VERSION:
            raise FormatError(f"unsupported manifest schema_version {d.get('schema_version')!r}")
        try:
            return cls(
                scene_id=d["scene_id"],
                lens=LensConfig.from_dict(d["lens"]),
                depth_path=d["depth_path"],
                all_in_focus_path=d["all_in_focus_path"],
                shots=[Shot(**s) for s in d["shots"]],
                depth_unit_scale=d.get("depth_unit_scale", 1.0),
                root=str(root),
            )
        except (KeyError, TypeError) as e:
            raise FormatError(f"manifest missing or malformed field: {e}") from None

    def save(self, path=None) -> Path:
        path = Path(path) if path else self.path("manifest.json")
        path.write_text(self.to_json())
        return path

    @classmethod
    def load(cls, path) -> "SceneManifest":
        path = Path(path)
        if path.is_dir():
            path = path / "manifest.json"
        return cls.from_json(path.read_text(), root=path.parent)


def generate_scene(
    all_in_focus,
    depth: DepthMap,
    lens: LensConfig,
    focus_depths,
    out_dir,
    opts: RenderOptions = RenderOptions(),
    threads: int = 1,
    scene_id=None,
    aif_format: str = "png",
    progress: bool = False,
) -> SceneManifest:
    """Render and write a complete scene, one focused image and defocus map per focus depth.

    The depth map is written first and the defocus maps are computed from the
    stored (float32) depth, so stored maps agree exactly with recomputation.
    """
    if not depth.fully_valid:
        raise DataError("depth map has invalid pixels; refine it first")
    fds = [float(f) for f in focus_depths]
    if not fds or any(b <= a for a, b in zip(fds, fds[1:])):
        raise DataError("focus depths must be nonempty and strictly increasing")
    out = Path(out_dir)
    (out / "shots").mkdir(parents=True, exist_ok=True)
    aif = as_raster(all_in_focus)
    if aif.shape[:2] != depth.shape:
        raise DataError("all-in-focus image and depth map differ in size")

    aif_rel = f"aif.{aif_format}"
    save_raster(aif, out / aif_rel)
    save_depth(depth, out / "depth.pfm")
    stored_depth = load_depth(out / "depth.pfm")

    manifest = SceneManifest(
        scene_id=scene_id or out.name,
        lens=lens,
        depth_path="depth.pfm",
        all_in_focus_path=aif_rel,
        root=str(out),
    )
    for t, fd in enumerate(fds):
        setting = FocusSetting(fd)
        img = render_focused(aif, stored_depth, setting, lens, opts, threads)
        shot = Shot(f"shots/{t:03d}_img.png", fd, f"shots/{t:03d}_defocus.pfm")
        save_raster(img, out / shot.focused_image_path)
        save_defocus(defocus_map_from_depth(stored_depth, setting, lens), out / shot.defocus_map_path)
        manifest.shots.append(shot)
        if progress:
            print(f"shot {t + 1}/{len(fds)} focus={fd:g}mm", file=sys.stderr)
    manifest.save()
    return manifest


def _implied_focus_offset(stored: DefocusMap, depth: DepthMap, focus_mm: float, lens: LensConfig) -> float:
    """Focus-depth error that best explains a defocus residual, to first order.

    Uses the derivative of the CoC with respect to focus depth and a least
    squares fit of ``residual ~ dJ/dD_f * offset`` over all pixels.
    """
    h = 1e-3 * focus_mm
    lo = defocus_map_from_depth(depth, FocusSetting(focus_mm - h), lens).values
    hi = defocus_map_from_depth(depth, FocusSetting(focus_mm + h), lens).values
    slope = (hi - lo) / (2 * h)
    resid = stored.values - defocus_map_from_depth(depth, FocusSetting(focus_mm), lens).values
    denom = float(np.sum(slope * slope))
    return float(np.sum(slope * resid) / denom) if denom > 0 else float("nan")


def validate_scene(manifest) -> List[str]:
    """Check a scene on disk; returns a list of findings, empty when consistent.

    Stored PFM defocus maps must match the CoC recomputed from the stored depth,
    rounded to float32, within 1e-9 px.
    """
    if not isinstance(manifest, SceneManifest):
        try:
            manifest = SceneManifest.load(manifest)
        except (OSError, FormatError) as e:
            return [f"manifest: load error: {e}"]
    findings = []
    lens = manifest.lens
    if not manifest.shots:
        findings.append("manifest: no shots")
    fds = [s.focus_depth_mm for s in manifest.shots]
    if any(b <= a for a, b in zip(fds, fds[1:])):
        findings.append("manifest: focus depths not strictly increasing")

    def load(kind, loader, rel, *args):
        try:
            return loader(manifest.path(rel), *args)
        except (OSError, FormatError) as e:
            findings.append(f"{kind} {rel}: load error: {e}")
            return None

    depth = load("depth", load_depth, manifest.depth_path, manifest.depth_unit_scale)
    aif = load("all_in_focus", load_raster, manifest.all_in_focus_path)
    shape = depth.shape if depth is not None else None
    if depth is not None:
        if not depth.fully_valid or (depth.values <= 0).any():
            findings.append(f"depth {manifest.depth_path}: invalid pixels present")
            depth = None
    if aif is not None and shape is not None and aif.shape[:2] != shape:
        findings.append(f"all_in_focus {manifest.all_in_focus_path}: shape {aif.shape[:2]} != depth {shape}")

    for t, shot in enumerate(manifest.shots):
        tag = f"shot {t}"
        if not shot.focus_depth_mm > lens.focal_length_mm:
            findings.append(f"{tag}: focus depth {shot.focus_depth_mm} <= focal length")
            continue
        img = load(tag, load_raster, shot.focused_image_path)
        if img is not None and shape is not None and img.shape[:2] != shape:
            findings.append(f"{tag}: image shape {img.shape[:2]} != depth {shape}")
        stored = load(tag, load_defocus, shot.defocus_map_path)
        if stored is None or depth is None:
            continue
        if stored.shape != shape:
            findings.append(f"{tag}: defocus shape {stored.shape} != depth {shape}")
            continue
        expected = defocus_map_from_depth(depth, FocusSetting(shot.focus_depth_mm), lens)
        if _ext(shot.defocus_map_path) == ".pfm":
            exp_v, tol = expected.values.astype(np.float32).astype(np.float64), 1e-9
        else:
            exp_v, tol = expected.values, 1e-4
        if not stored.fully_valid:
            findings.append(f"{tag}: defocus map has invalid pixels")
            continue
        resid = float(np.max(np.abs(stored.values - exp_v)))
        if resid > tol:
            offset = _implied_focus_offset(stored, depth, shot.focus_depth_mm, lens)
            findings.append(
                f"{tag}: defocus inconsistent with depth at focus {shot.focus_depth_mm} mm "
                f"(max residual {resid:.6g} px > {tol:g}; "
                f"consistent with a focus error of {offset:+.4g} mm)"
            )
    return findings
