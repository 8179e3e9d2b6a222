import numpy as np

from defocuskit import DepthMap


def two_plane_depth(h, w, near=600.0, far=900.0):
    """Left half at ``near`` mm, right half at ``far`` mm."""
    d = np.full((h, w), near)
    d[:, w // 2:] = far
    return DepthMap(d)


def texture(rng, h, w, c=None):
    shape = (h, w) if c is None else (h, w, c)
    return rng.random(shape)
