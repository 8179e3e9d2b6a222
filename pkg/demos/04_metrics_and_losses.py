# Evaluation metrics and the multi-task loss.
import math

import numpy as np

from defocuskit import (
    DefocusMap,
    DepthMap,
    FocusSetting,
    LensConfig,
    LossWeights,
    defocus_map_from_depth,
    defocus_metrics,
    depth_loss,
    depth_metrics,
    normalize_map,
    physical_consistency,
    silog_term,
    ssim,
    total_loss,
)
from defocuskit.metrics import CSV_HEADER

rng = np.random.default_rng(2)
lens = LensConfig.reference_rig()
setting = FocusSetting(700.0)

gt = DepthMap(rng.uniform(500.0, 1000.0, (32, 32)))
pred = DepthMap(gt.values * rng.normal(1.0, 0.03, gt.shape))

print(",".join(CSV_HEADER))
print(depth_metrics(pred, gt).to_csv_row())

# The log term ignores a global scale, SSIM does not.
scaled = DepthMap(gt.values * math.e)
print("silog(e*gt, gt) =", silog_term(scaled, gt))
print("ssim(pred, gt)  =", round(ssim(pred.values, gt.values, gt.values.max()), 4))
print("depth loss      =", round(depth_loss(pred, gt), 5))

# A defocus prediction that agrees with the predicted depth has no
# physical-consistency penalty.
J_gt = defocus_map_from_depth(gt, setting, lens)
J_hat = defocus_map_from_depth(pred, setting, lens)
print("consistency(J_hat from pred) =", physical_consistency(J_hat, pred, setting, lens))
print("consistency(J_hat + 1 px)    =", physical_consistency(DefocusMap(J_hat.values + 1), pred, setting, lens))

w = LossWeights(lambda1=1.0, lambda2=1.0, lambda3=1.0, lambda4=1.0, lambda5=0.1)
print("total loss =", round(total_loss(pred, gt, J_hat, J_gt, setting, lens, w), 5))

# Defocus maps from other methods live on other scales; compare after min-max.
other = DefocusMap(0.01 * J_gt.values + 3.0)
print("normalized range:", normalize_map(other).values.min(), normalize_map(other).values.max())
print("defocus δ<1.05 normalized:", defocus_metrics(other, J_gt, normalize=True).delta_1_05)
