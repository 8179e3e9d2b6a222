"""Depth/defocus evaluation metrics and the multi-task training losses."""
from __future__ import annotations

import math
from dataclasses import astuple, dataclass, fields

import numpy as np
from scipy import ndimage

from .errors import DataError
from .maps import DefocusMap, DepthMap, MaskedMap
from .optics import FocusSetting, LensConfig, defocus_map_from_depth

DEFOCUS_EPS = 1e-6

# column order of the results tables
CSV_HEADER = ("delta_1_05", "delta_1_15", "delta_1_25", "abs_rel", "sq_rel", "rmse", "rmse_log", "log10_err")


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


@dataclass(frozen=True)
class MetricReport:
    delta_1_05: float
    delta_1_15: float
    delta_1_25: float
    abs_rel: float
    sq_rel: float
    rmse: float
    rmse_log: float
    log10_err: float

    def to_record(self) -> str:
        return "\n".join(f"{f.name}={_fmt(getattr(self, f.name))}" for f in fields(self)) + "\n"

    def to_csv_row(self) -> str:
        return ",".join(_fmt(v) for v in astuple(self))

    @classmethod
    def from_record(cls, text: str) -> "MetricReport":
        kv = dict(line.split("=", 1) for line in text.splitlines() if line.strip())
        return cls(**{k: float(kv[k]) for k in CSV_HEADER})


@dataclass(frozen=True)
class LossWeights:
    lambda1: float = 1.0
    lambda2: float = 1.0
    lambda3: float = 1.0
    lambda4: float = 1.0
    lambda5: float = 1.0

    def __post_init__(self):
        for v in astuple(self):
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"loss weights must be finite and >= 0, got {v}")


def _as_map(m, cls=MaskedMap) -> MaskedMap:
    return m if isinstance(m, MaskedMap) else cls(np.asarray(m, dtype=np.float64))


def _paired(pred, gt):
    pred, gt = _as_map(pred), _as_map(gt)
    if pred.shape != gt.shape:
        raise DataError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    both = pred.valid & gt.valid
    if not both.any():
        raise DataError("no pixel is valid in both maps")
    return pred, gt, both


def depth_metrics(pred, gt) -> MetricReport:
    """Threshold accuracies and error statistics over the common valid pixels."""
    pred, gt, both = _paired(pred, gt)
    p, g = pred.values[both], gt.values[both]
    if (p <= 0).any() or (g <= 0).any():
        raise DataError("metrics need strictly positive values")
    ratio = np.maximum(p / g, g / p)
    diff = p - g
    return MetricReport(
        delta_1_05=float(np.mean(ratio < 1.05)),
        delta_1_15=float(np.mean(ratio < 1.15)),
        delta_1_25=float(np.mean(ratio < 1.25)),
        abs_rel=float(np.mean(np.abs(diff) / g)),
        sq_rel=float(np.mean(diff**2 / g)),
        rmse=float(np.sqrt(np.mean(diff**2))),
        rmse_log=float(np.sqrt(np.mean((np.log(p) - np.log(g)) ** 2))),
        log10_err=float(np.mean(np.abs(np.log10(p) - np.log10(g)))),
    )


def defocus_metrics(pred, gt, normalize: bool = False, eps: float = DEFOCUS_EPS) -> MetricReport:
    """``depth_metrics`` on defocus maps, flooring zero CoC values at ``eps``.

    With ``normalize`` both maps are min-max rescaled first.
    """
    pred, gt = _as_map(pred, DefocusMap), _as_map(gt, DefocusMap)
    if normalize:
        pred, gt = normalize_map(pred), normalize_map(gt)
    floor = lambda m: type(m)(np.maximum(m.values, eps), m.valid)  # noqa: E731
    return depth_metrics(floor(pred), floor(gt))


def _gaussian_window(size=11, sigma=1.5) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-(x**2) / (2 * sigma**2))
    g /= g.sum()
    return g


def ssim_map(a, b, dynamic_range: float) -> np.ndarray:
    """Local SSIM index under an 11x11 Gaussian window (sigma 1.5).

    Borders are handled by half-sample symmetric reflection.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim == 3 and a.shape[2] == 1:
        a = a[:, :, 0]
    if b.ndim == 3 and b.shape[2] == 1:
        b = b[:, :, 0]
    if a.shape != b.shape:
        raise DataError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.ndim != 2:
        raise DataError("ssim needs single-channel input")
    g = _gaussian_window()

    def blur(x):
        x = ndimage.correlate1d(x, g, axis=0, mode="reflect")
        return ndimage.correlate1d(x, g, axis=1, mode="reflect")

    c1 = (0.01 * dynamic_range) ** 2
    c2 = (0.03 * dynamic_range) ** 2
    mu_a, mu_b = blur(a), blur(b)
    var_a = blur(a * a) - mu_a * mu_a
    var_b = blur(b * b) - mu_b * mu_b
    cov = blur(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return num / den


def ssim(a, b, dynamic_range: float = 1.0) -> float:
    return float(np.mean(ssim_map(a, b, dynamic_range)))


def silog_term(pred, gt) -> float:
    """Scale-invariant log error: mean(d^2) - (sum d)^2 / (2 N^2), d = ln gt - ln pred."""
    pred, gt, both = _paired(pred, gt)
    p, g = pred.values[both], gt.values[both]
    if (p <= 0).any() or (g <= 0).any():
        raise DataError("log loss needs strictly positive values")
    d = np.log(g) - np.log(p)
    n = d.size
    return float(np.sum(d * d) / n - np.sum(d) ** 2 / (2.0 * n * n))


def _ssim_masked(p: MaskedMap, g: MaskedMap, both: np.ndarray) -> float:
    L = max(np.max(p.values[both]), np.max(g.values[both]))
    if not L > 0:
        L = 1.0
    s = ssim_map(np.where(both, p.values, 0.0), np.where(both, g.values, 0.0), L)
    return float(np.mean(s[both]))


def _ssim_silog_loss(pred, gt, w_ssim, w_log, eps=None):
    pred, gt, both = _paired(pred, gt)
    if eps is not None:
        pred = type(pred)(np.maximum(pred.values, eps), pred.valid)
        gt = type(gt)(np.maximum(gt.values, eps), gt.valid)
    total = 0.0
    if w_ssim:
        total += w_ssim * (1.0 - _ssim_masked(pred, gt, both)) / 2.0
    if w_log:
        total += w_log * silog_term(pred, gt)
    return total


def depth_loss(pred, gt, w: LossWeights = LossWeights()) -> float:
    """SSIM dissimilarity plus scale-invariant log error on depth.

    SSIM uses the largest compared depth as its dynamic range.
    """
    return _ssim_silog_loss(pred, gt, w.lambda1, w.lambda2)


def defocus_loss(pred, gt, w: LossWeights = LossWeights(), eps: float = DEFOCUS_EPS) -> float:
    return _ssim_silog_loss(pred, gt, w.lambda3, w.lambda4, eps)


def physical_consistency(
    J_hat, D_hat: DepthMap, setting: FocusSetting, lens: LensConfig, w: LossWeights = LossWeights()
) -> float:
    """``lambda5 / N * ||J_hat - CoC(D_hat)||_2`` over the N common valid pixels.

    Note this is the Euclidean norm divided by N, not a root-mean-square.
    """
    D_hat = _as_map(D_hat, DepthMap)
    implied = defocus_map_from_depth(D_hat, setting, lens)
    J_hat, implied, both = _paired(J_hat, implied)
    r = J_hat.values[both] - implied.values[both]
    return float(w.lambda5 * np.sqrt(np.sum(r * r)) / r.size)


def total_loss(
    D_hat, D_gt, J_hat, J_gt, setting: FocusSetting, lens: LensConfig, w: LossWeights = LossWeights()
) -> float:
    return (
        depth_loss(D_hat, D_gt, w)
        + defocus_loss(J_hat, J_gt, w)
        + physical_consistency(J_hat, D_hat, setting, lens, w)
    )


def normalize_map(m):
    """Min-max rescale valid pixels to [0, 1]; a constant map becomes zeros.

    Returns the same kind of object it was given (masked map or array).
    """
    mm = _as_map(m)
    out = np.full(mm.shape, np.nan)
    v = mm.values[mm.valid]
    if v.size:
        lo, hi = v.min(), v.max()
        out[mm.valid] = (v - lo) / (hi - lo) if hi > lo else 0.0
    if isinstance(m, MaskedMap):
        return type(m)(out, mm.valid.copy())
    return out
