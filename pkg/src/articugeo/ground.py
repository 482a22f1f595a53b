"""Ground detection from prior normals and camera-height regularisation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import CameraModel, cabs, dot3, real_part, unproject_depth
from .losses import TermValue, masked_mean
from .rasters import NormalMap, check_same_shape

DEFAULT_S_THR = np.deg2rad(5.0)


@dataclass(frozen=True)
class GroundParams:
    s_thr: float = DEFAULT_S_THR
    n_y: tuple = field(default=(0.0, 1.0, 0.0))

    def __post_init__(self):
        if not 0.0 < self.s_thr < np.pi / 2:
            raise ValueError("s_thr must lie in (0, pi/2)")


def ground_angle(prior_normals: NormalMap, params: GroundParams = GroundParams()):
    """Angle between ``n_y`` and the raw-orientation normal, radians."""
    raw = real_part(prior_normals.raw().vectors)
    n_y = np.asarray(params.n_y, dtype=float)
    n_y = n_y / np.linalg.norm(n_y)
    cos = np.clip(raw @ n_y, -1.0, 1.0)
    return np.arccos(cos)


def ground_mask(prior_normals: NormalMap, prior_depth, cam: CameraModel,
                params: GroundParams = GroundParams()) -> np.ndarray:
    """Pixels whose prior normal is within ``s_thr`` of ``n_y`` and lie below the camera.

    The y-down camera convention puts the ground at positive y, and the raw
    (away-from-camera) normal of ground points along +y.
    """
    check_same_shape(prior_normals.valid, prior_depth, names=["prior normals", "prior depth"])
    depth = real_part(np.asarray(prior_depth))
    below = unproject_depth(np.where(depth > 0, depth, 0.0), cam)[..., 1] > 0
    s = ground_angle(prior_normals, params)
    return prior_normals.valid & (depth > 0) & (np.abs(s) < params.s_thr) & below


def height_map(est_depth, est_normals: NormalMap, cam: CameraModel):
    """Per-pixel camera height ``|N . P|``; returns ``(heights, valid)``."""
    check_same_shape(est_depth, est_normals.valid, names=["depth", "normals"])
    est_depth = np.asarray(est_depth)
    good = real_part(est_depth) > 0
    P = unproject_depth(np.where(good, est_depth, 0.0), cam)
    h = cabs(dot3(est_normals.vectors, P))
    valid = good & est_normals.valid
    return np.where(valid, h, 0.0), valid


def loss_ch(height, mask, h_gt: float, height_valid=None) -> TermValue:
    """Masked mean ``|h - h_gt|`` in meters."""
    check_same_shape(height, mask, names=["height", "mask"])
    m = np.asarray(mask, dtype=bool)
    if height_valid is not None:
        m = m & height_valid
    return masked_mean(cabs(np.asarray(height) - h_gt), m)
