"""Defocus physics toolkit: CoC geometry, PSF-splatting renderer, shape from
focus, evaluation metrics and scene datasets."""

__version__ = "0.1.0"

from .errors import DataError, DomainError, FormatError
from .maps import DefocusMap, DepthMap, as_raster, luma
from .optics import (
    FocusSetting,
    LensConfig,
    coc_pixels,
    defocus_map_from_depth,
    focus_depth_from_sensor,
    sensor_from_focus_depth,
)
from .render import RenderOptions, gaussian_weight, kernel_radius, render_focused, render_stack
from .stack import FocusStack, compose_all_in_focus, detect_invalid, focus_measure, refine_depth
from .metrics import (
    LossWeights,
    MetricReport,
    defocus_loss,
    defocus_metrics,
    depth_loss,
    depth_metrics,
    normalize_map,
    physical_consistency,
    silog_term,
    ssim,
    total_loss,
)
from .dataset import SceneManifest, generate_scene, load_depth, load_raster, save_depth, save_raster, validate_scene
