"""Surface normals from depth and cross-view normal consistency.

Two ways of carrying a source-view normal into the target view are provided:
``reproject_normals_direct`` samples the source normal map at the warped
correspondences (the supervisory signal), while ``reproject_normals_via_depth``
reprojects depth first and re-derives normals (kept as a comparison oracle).
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatchError
from .geometry import CameraModel, SE3Transform, cabs, csqrt, dot3, inverse, real_part, unproject_depth
from .losses import TermValue, masked_mean, min_over_sources
from .rasters import NormalMap, check_same_shape
from .warping import Correspondence, apply_stencil, correspondences, reproject_depth

CROSS_EPS = 1e-12
RENORM_EPS = 1e-6


def _normalize(vec, eps):
    n2 = dot3(vec, vec)
    ok = real_part(n2) > eps * eps
    n = csqrt(np.where(ok, n2, 1.0))
    return vec / n[..., None], ok


def normal_from_depth(depth, cam: CameraModel, camera_facing: bool = True) -> NormalMap:
    """Normals from the cross product of right and down neighbour offsets.

    The last row and column are invalid, as is any pixel whose stencil
    touches invalid depth.
    """
    depth = np.asarray(depth)
    if depth.shape != cam.shape:
        raise DimensionMismatchError(f"depth {depth.shape} does not match camera {cam.shape}")
    dr = real_part(depth)
    good = dr > 0
    P = unproject_depth(np.where(good, depth, 0.0), cam)
    h, w = depth.shape
    vx = P[:-1, 1:] - P[:-1, :-1]
    vy = P[1:, :-1] - P[:-1, :-1]
    c = np.cross(vx, vy)
    unit, ok = _normalize(c, CROSS_EPS)
    valid = np.zeros((h, w), dtype=bool)
    valid[:-1, :-1] = good[:-1, :-1] & good[:-1, 1:] & good[1:, :-1] & ok
    vec = np.zeros((h, w, 3), dtype=unit.dtype)
    vec[:-1, :-1] = unit
    if camera_facing:
        towards = -np.sum(real_part(vec) * real_part(P), axis=-1)
        vec = np.where((towards < 0)[..., None], -vec, vec)
    vec = np.where(valid[..., None], vec, 0.0)
    return NormalMap(vec, valid, camera_facing)


def nc_map(a, b):
    """Per-pixel ``1 - |a . b|``."""
    return 1.0 - cabs(dot3(np.asarray(a), np.asarray(b)))


def nc(a: NormalMap, b: NormalMap, mask=None) -> TermValue:
    """Masked mean of ``1 - |a . b|``; sign agnostic, in [0, 1]."""
    check_same_shape(a.valid, b.valid, names=["a", "b"])
    valid = a.valid & b.valid
    if mask is not None:
        check_same_shape(a.valid, mask, names=["normals", "mask"])
        valid = valid & np.asarray(mask, dtype=bool)
    return masked_mean(nc_map(a.vectors, b.vectors), valid)


def _sample_unit(normals: NormalMap, corr: Correspondence):
    """Channel-major ``(3, N)`` renormalised samples and the flat validity."""
    st = corr.stencil(*normals.shape)
    vals, ok = apply_stencil(st, normals.vectors, normals.valid, channel_major=True)
    n2 = vals[0] * vals[0] + vals[1] * vals[1] + vals[2] * vals[2]
    ok = ok & corr.mask.ravel() & (real_part(n2) > RENORM_EPS * RENORM_EPS)
    n = csqrt(np.where(ok, n2, 1.0))
    return vals * (ok / n), ok


def _to_map(unit_cm, ok, shape, camera_facing) -> NormalMap:
    h, w = shape
    return NormalMap(np.ascontiguousarray(unit_cm.T).reshape(h, w, 3), ok.reshape(h, w), camera_facing)


def sample_normals(normals: NormalMap, corr: Correspondence) -> NormalMap:
    """Bilinear-sample a normal map at correspondences and renormalise."""
    unit, ok = _sample_unit(normals, corr)
    return _to_map(unit, ok, corr.mask.shape, normals.camera_facing)


def reproject_normals_direct(normals_source: NormalMap, depth_target, X: SE3Transform,
                             target_cam: CameraModel, source_cam: CameraModel,
                             corr: Correspondence | None = None) -> tuple[NormalMap, np.ndarray]:
    """Source normals sampled at target correspondences (still in source frame)."""
    if normals_source.shape != source_cam.shape:
        raise DimensionMismatchError("source normals do not match source camera")
    if corr is None:
        corr = correspondences(depth_target, target_cam, source_cam, X)
    out = sample_normals(normals_source, corr)
    return out, out.valid


def compensate_rotation(normals: NormalMap, R) -> NormalMap:
    """Per-pixel ``R^T N``."""
    R = np.asarray(R)
    vec = normals.vectors @ R  # row-vector form of R^T n
    return NormalMap(vec, normals.valid.copy(), normals.camera_facing)


def reproject_normals_via_depth(depth_source, depth_target, X: SE3Transform,
                                target_cam: CameraModel, source_cam: CameraModel):
    """Reproject source depth into the target view, then take its normals.

    Output normals live in the target frame.
    """
    d_tilde, mask = reproject_depth(source_cam, target_cam, depth_source, inverse(X), depth_target)
    out = normal_from_depth(np.where(mask, d_tilde, 0.0), target_cam)
    return out, out.valid


def loss_snc(normals_target_est: NormalMap, normals_source_est: NormalMap, depth_target,
             X: SE3Transform, target_cam: CameraModel, source_cam: CameraModel,
             corr: Correspondence | None = None) -> TermValue:
    """``NC(R^T N~_j, N^_i)`` between target normals and rotation-compensated source normals."""
    rotated = compensated_prior(normals_source_est, depth_target, X, target_cam, source_cam, corr)
    return nc(rotated, normals_target_est)


def compensated_prior(prior_source: NormalMap, depth_target, X: SE3Transform,
                      target_cam: CameraModel, source_cam: CameraModel,
                      corr: Correspondence | None = None) -> NormalMap:
    """Prior normals of a context sampled through ``X`` and rotated back: ``R_X^T N~``."""
    if prior_source.shape != source_cam.shape:
        raise DimensionMismatchError("source normals do not match source camera")
    if corr is None:
        corr = correspondences(depth_target, target_cam, source_cam, X)
    unit, ok = _sample_unit(prior_source, corr)
    return _to_map(X.rotation.T @ unit, ok, corr.mask.shape, prior_source.camera_facing)


def _nc_candidates(recons, reference: NormalMap):
    out = []
    for r in recons:
        valid = r.valid & reference.valid
        out.append((nc_map(r.vectors, reference.vectors), valid))
    return out


def loss_pnc(kind: str, target_prior: NormalMap | None, recons, spatial_recon: NormalMap | None = None) -> TermValue:
    """Pseudo-normal consistency for one context family.

    ``kind`` is ``"T"``, ``"S"``, ``"ST"`` or ``"MVRC"``.  ``recons`` are the
    compensated priors from :func:`compensated_prior` (one per source time
    for T/ST/MVRC, a single one for S).  For MVRC the reference is the
    spatial reconstruction instead of the target prior.
    """
    recons = list(recons)
    if not recons:
        raise ValueError("PNC needs at least one reconstruction")
    if kind == "MVRC":
        if spatial_recon is None:
            raise ValueError("MVRC PNC needs the spatial reconstruction")
        best, valid = min_over_sources(_nc_candidates(recons, spatial_recon))
        return masked_mean(best, valid)
    if target_prior is None:
        raise ValueError("PNC needs the target-view prior normals")
    if kind == "S":
        if len(recons) != 1:
            raise ValueError("spatial PNC takes exactly one reconstruction")
        return nc(recons[0], target_prior)
    if kind not in ("T", "ST"):
        raise ValueError(f"unknown PNC context {kind!r}")
    best, valid = min_over_sources(_nc_candidates(recons, target_prior))
    return masked_mean(best, valid)


def angular_error_deg(a, b, valid=None):
    """Per-pixel unsigned angle between normal fields, degrees."""
    a = real_part(np.asarray(a))
    b = real_part(np.asarray(b))
    ang = np.degrees(np.arctan2(np.linalg.norm(np.cross(a, b), axis=-1), np.abs(np.sum(a * b, axis=-1))))
    if valid is not None:
        ang = np.where(valid, ang, np.nan)
    return ang
