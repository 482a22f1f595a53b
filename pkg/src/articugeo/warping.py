"""Backward warping, bilinear sampling and depth reprojection.

Pixel ``(u, v)`` addresses column ``u`` and row ``v``; integer coordinates
are pixel centres.  Samples whose 2x2 neighbourhood leaves the image, or
touches an invalid source pixel, are flagged invalid instead of clamped.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import CameraModel, SE3Transform, inverse, project_points, real_part, unproject_depth
from .rasters import check_same_shape
from .errors import DimensionMismatchError


@dataclass(eq=False)
class Stencil:
    """Bilinear gather indices and weights for a fixed set of sample points.

    Only in-bounds samples are stored: ``sel`` holds their flat positions
    and ``idx``/``fu``/``fv`` are aligned with it.
    """

    shape: tuple
    size: tuple          # (h, w) of the sampled raster
    inside: np.ndarray   # all 4 neighbours in bounds and coordinates finite
    sel: np.ndarray      # flat positions where inside
    idx: tuple           # flat raster indices of the 4 neighbours, per selected sample
    fu: np.ndarray
    fv: np.ndarray


def make_stencil(u, v, h: int, w: int) -> Stencil:
    u = np.asarray(u)
    v = np.asarray(v)
    ur, vr = real_part(u).ravel(), real_part(v).ravel()
    finite = np.isfinite(ur) & np.isfinite(vr)
    # clipping keeps far-off samples out of bounds without overflowing the cast
    ur = np.clip(np.where(finite, ur, -1.0), -2.0, w + 1.0)
    vr = np.clip(np.where(finite, vr, -1.0), -2.0, h + 1.0)
    u0 = np.floor(ur).astype(np.int64)
    v0 = np.floor(vr).astype(np.int64)
    # exact samples on the last row/column need no right/lower neighbour
    if w > 1:
        u0 = np.where((u0 == w - 1) & (ur == w - 1), w - 2, u0)
    if h > 1:
        v0 = np.where((v0 == h - 1) & (vr == h - 1), h - 2, v0)
    inside = finite & (u0 >= 0) & (u0 + 1 <= w - 1) & (v0 >= 0) & (v0 + 1 <= h - 1)
    sel = np.flatnonzero(inside)
    u0, v0 = u0[sel], v0[sel]
    du = 1 if w > 1 else 0
    dv = w if h > 1 else 0
    i00 = v0 * w + u0
    idx = (i00, i00 + du, i00 + dv, i00 + du + dv)
    fu = u.ravel()[sel] - u0
    fv = v.ravel()[sel] - v0
    return Stencil(np.shape(u), (h, w), inside, sel, idx, fu, fv)


def apply_stencil(st: Stencil, raster, valid=None, channel_major: bool = False):
    """Interpolate ``raster`` through a stencil.

    With ``channel_major`` the result stays as flat ``(C, N)`` values and a
    flat ``(N,)`` mask, which is cheaper for callers doing per-channel math.
    """
    raster = np.asarray(raster)
    h, w = raster.shape[:2]
    if (h, w) != st.size:
        raise DimensionMismatchError(f"raster {(h, w)} does not match stencil {st.size}")
    i00, i01, i10, i11 = st.idx
    fu, fv, sel = st.fu, st.fv, st.sel
    if valid is not None:
        vf = np.asarray(valid, dtype=bool).ravel()
        good = vf[i00] & vf[i01] & vf[i10] & vf[i11]
        if not good.all():
            i00, i01, i10, i11 = i00[good], i01[good], i10[good], i11[good]
            fu, fv, sel = fu[good], fv[good], sel[good]
    n = st.inside.size
    ok = np.zeros(n, dtype=bool)
    ok[sel] = True
    # gathers run on the selected samples only; overlaps are often small
    chans = raster.shape[2:]
    data = raster.reshape(h * w, -1)
    c00, c01, c10, c11 = (np.take(data, i, axis=0) for i in (i00, i01, i10, i11))
    fu, fv = fu[:, None], fv[:, None]
    top = c00 + fu * (c01 - c00)
    vals = top + fv * (c10 + fu * (c11 - c10) - top)
    out = np.zeros((n, data.shape[1]), dtype=vals.dtype)
    out[sel] = vals
    if channel_major:
        return out.T, ok
    out = out.reshape(st.shape + chans)
    ok = ok.reshape(st.shape)
    if out.ndim == 0:
        return out[()], bool(ok)
    return out, ok


def bilinear_sample(raster, u, v, valid=None):
    """Sample ``raster`` at continuous ``(u, v)``.

    Returns ``(values, ok)``.  ``values`` has shape ``u.shape + raster.shape[2:]``
    and is zero where ``ok`` is False.
    """
    raster = np.asarray(raster)
    h, w = raster.shape[:2]
    return apply_stencil(make_stencil(u, v, h, w), raster, valid)


@dataclass(eq=False)
class Correspondence:
    """Target-pixel -> source-pixel map for one warping context."""

    u: np.ndarray
    v: np.ndarray
    z: np.ndarray
    mask: np.ndarray  # target depth > 0 and transformed z > 0
    _stencils: dict = field(default_factory=dict, repr=False)

    def stencil(self, h: int, w: int) -> Stencil:
        if (h, w) not in self._stencils:
            self._stencils[(h, w)] = make_stencil(self.u, self.v, h, w)
        return self._stencils[(h, w)]

    def sample(self, raster, valid=None):
        raster = np.asarray(raster)
        values, ok = apply_stencil(self.stencil(*raster.shape[:2]), raster, valid)
        mask = self.mask & ok
        extra = (None,) * (np.ndim(values) - 2)
        return np.where(mask[(...,) + extra], values, 0.0), mask


def lift_target(depth_target, target_cam: CameraModel) -> np.ndarray:
    """Back-project a target depth map, with invalid pixels lifted to the origin."""
    depth_target = np.asarray(depth_target)
    dr = real_part(depth_target)
    return unproject_depth(np.where(dr > 0, depth_target, 0.0), target_cam)


def correspondences(depth_target, target_cam: CameraModel, source_cam: CameraModel,
                    X: SE3Transform, points=None) -> Correspondence:
    """``p_ij = K_j X D_i(p) K_i^{-1} p`` for every target pixel.

    ``points`` may carry the already lifted target cloud when several
    contexts share one target depth.
    """
    depth_target = np.asarray(depth_target)
    if depth_target.shape != target_cam.shape:
        raise DimensionMismatchError(
            f"target depth {depth_target.shape} does not match camera {target_cam.shape}")
    dr = real_part(depth_target)
    P = lift_target(depth_target, target_cam) if points is None else points
    Q = X.apply(P)
    u, v, z = project_points(Q, source_cam)
    mask = (dr > 0) & (real_part(z) > 0)
    return Correspondence(u, v, z, mask)


def warp_image(target_cam: CameraModel, source_cam: CameraModel, depth_target, X: SE3Transform,
               source_img, corr: Correspondence | None = None, source_valid=None):
    """Reconstruct the target view by sampling ``source_img``.

    ``source_valid`` marks source pixels that carry signal (e.g. rendered
    pixels that hit geometry).  Returns ``(image, mask)``; invalid pixels are zero.
    """
    source_img = np.asarray(source_img)
    if source_img.shape[:2] != source_cam.shape:
        raise DimensionMismatchError(
            f"source image {source_img.shape[:2]} does not match camera {source_cam.shape}")
    if corr is None:
        corr = correspondences(depth_target, target_cam, source_cam, X)
    return corr.sample(source_img, source_valid)


def reproject_depth(source_cam: CameraModel, target_cam: CameraModel, depth_source,
                    T_source_to_target: SE3Transform, depth_target):
    """Source depth as seen from the target view (modified backward warp).

    Source points are moved into the target frame and their ``z`` is sampled
    at the correspondences implied by ``depth_target``.
    """
    depth_source = np.asarray(depth_source)
    if depth_source.shape != source_cam.shape:
        raise DimensionMismatchError(
            f"source depth {depth_source.shape} does not match camera {source_cam.shape}")
    ds = real_part(depth_source)
    P_src = unproject_depth(np.where(ds > 0, depth_source, 0.0), source_cam)
    z_in_target = T_source_to_target.apply(P_src)[..., 2]
    src_valid = (ds > 0) & (real_part(z_in_target) > 0)
    corr = correspondences(depth_target, target_cam, source_cam, inverse(T_source_to_target))
    return corr.sample(z_in_target, src_valid)


def combine_masks(masks) -> np.ndarray:
    masks = [np.asarray(m, dtype=bool) for m in masks]
    if not masks:
        raise ValueError("no masks to combine")
    check_same_shape(*masks)
    out = masks[0].copy()
    for m in masks[1:]:
        out &= m
    return out
