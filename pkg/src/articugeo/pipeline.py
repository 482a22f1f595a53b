"""Evaluate every loss term over the frames and cameras listed in a manifest.

Term names follow ``<family>_<context>_<group>`` where the group is ``wv`` for
within-vehicle sources and ``cv0``/``cv1``/``cv2`` for the cross-vehicle pair
types.  Terms are pooled pixel-wise over contexts, cameras and frames.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rasters
from .errors import IncompleteStateError
from .geometry import SE3Transform, inverse
from .ground import GroundParams, ground_mask, height_map, loss_ch
from .losses import (LossReport, LossWeights, TermValue, aggregate, loss_mvrc, loss_sdc,
                     loss_smoothness, loss_spatial, loss_spatiotemporal, loss_temporal)
from .manifest import Manifest, motion_dict_from_poses
from .normals import compensated_prior, loss_pnc, loss_snc, nc, normal_from_depth
from .pose import VpcWeights, cross_vehicle_pose_error, loss_vpc, motion_between, read_motions
from .rig import ContextKind, ContextSpec, RigConfig, RigState, context_transform
from .warping import correspondences, lift_target, reproject_depth

ALL_FAMILIES = ("photo_T", "photo_S", "photo_ST", "photo_MVRC", "sdc", "snc", "nc",
                "pnc_T", "pnc_S", "pnc_ST", "pnc_MVRC", "ch", "vpc", "smooth")


@dataclass
class LossOptions:
    cv_types: tuple = (0, 1, 2)
    within_vehicle: bool = True
    families: tuple = ALL_FAMILIES
    depth_scale: float = 1.0
    motions_path: str | None = None   # overrides the manifest's motion file
    temporal_offsets: tuple = (-1, 1)
    ground: GroundParams = field(default_factory=GroundParams)
    vpc: VpcWeights = field(default_factory=VpcWeights)
    alpha: float = 0.85

    def wants(self, family: str) -> bool:
        return family in self.families


def _group(ctx: ContextSpec) -> str:
    return "wv" if not ctx.kind.cross_vehicle else f"cv{ctx.cv_type}"


class _Store:
    """Lazy, cached access to manifest rasters."""

    def __init__(self, manifest: Manifest, rig: RigConfig, depth_scale: float):
        self.m = manifest
        self.rig = rig
        self.scale = depth_scale
        self._cache = {}

    def _get(self, key, fn):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]

    def entry(self, k, cam):
        return self.m.camera_entry(k, cam)

    def image(self, k, cam):
        return self._get(("img", k, cam), lambda: rasters.read_image(self.m.path(self.entry(k, cam)["image"])))

    def valid(self, k, cam):
        def load():
            e = self.entry(k, cam)
            if "valid" in e:
                return rasters.read_mask(self.m.path(e["valid"]))
            return np.ones(self.rig.cameras[cam].shape, dtype=bool)
        return self._get(("valid", k, cam), load)

    def depth(self, k, cam):
        return self._get(("depth", k, cam),
                         lambda: self.scale * rasters.read_depth(self.m.path(self.entry(k, cam)["depth"])))

    def est_normals(self, k, cam):
        return self._get(("nhat", k, cam), lambda: normal_from_depth(self.depth(k, cam), self.rig.cameras[cam]))

    def prior(self, k, cam):
        def load():
            e = self.entry(k, cam)
            key, mkey = ("prior_normals", "prior_normal_mask") if "prior_normals" in e else ("normals", "normal_mask")
            mask = self.m.path(e[mkey]) if mkey in e else None
            return rasters.read_normals(self.m.path(e[key]), mask)
        return self._get(("prior", k, cam), load)


def _add(terms, name, tv: TermValue):
    terms[name] = terms.get(name, TermValue(0.0, 0)) + tv


def compute_terms(manifest: Manifest, opts: LossOptions = LossOptions(), rig: RigConfig | None = None):
    rig = rig or manifest.load_rig()
    store = _Store(manifest, rig, opts.depth_scale)
    if opts.motions_path is not None:
        motions = read_motions(opts.motions_path)
    elif manifest.motions is not None:
        motions = read_motions(manifest.path(manifest.motions))
    else:
        motions = motion_dict_from_poses(manifest)
    frames = manifest.frame_indices
    frame_set = set(frames)

    def state(t, tau=None):
        cross = manifest.transform(t if tau is None else tau, "cross_vehicle")
        if tau is None:
            return RigState(t, cross)
        try:
            f = motion_between(motions, "front", t, tau)
            r = motion_between(motions, "rear", t, tau)
        except KeyError as exc:
            raise IncompleteStateError(f"no motion for step {exc.args[0]}") from None
        return RigState(tau, cross, f, r)

    terms: dict[str, TermValue] = {}
    # pre-register names so toggled-on but empty terms still show up
    groups = (["wv"] if opts.within_vehicle else []) + [f"cv{t}" for t in opts.cv_types]
    for fam in ("photo_S", "photo_ST", "photo_MVRC", "pnc_S", "pnc_ST", "pnc_MVRC"):
        if opts.wants(fam):
            for g in groups:
                terms[f"{fam}_{g}"] = TermValue(0.0, 0)
    for fam in ("sdc", "snc"):
        if opts.wants(fam):
            for g in groups:
                terms[f"{fam}_{g}"] = TermValue(0.0, 0)
    for fam in ("photo_T", "pnc_T", "nc", "ch", "vpc", "smooth"):
        if opts.wants(fam):
            terms[fam] = TermValue(0.0, 0)

    alpha = opts.alpha
    for t in frames:
        st_t = state(t)
        taus = [t + o for o in opts.temporal_offsets if t + o in frame_set]
        st_tau = {tau: state(t, tau) for tau in taus}
        for i in rig.camera_ids:
            cam_i = rig.cameras[i]
            D_i = store.depth(t, i)
            P_i = lift_target(D_i, cam_i)
            I_i = store.image(t, i)
            N_i = store.est_normals(t, i)
            need_prior = any(opts.wants(f) for f in ("nc", "pnc_T", "pnc_S", "pnc_ST", "ch"))
            prior_i = store.prior(t, i) if need_prior else None

            if opts.wants("smooth"):
                _add(terms, "smooth", loss_smoothness(D_i, I_i))
            if opts.wants("nc"):
                _add(terms, "nc", nc(N_i, prior_i))
            if opts.wants("ch"):
                gm = ground_mask(prior_i, D_i, cam_i, opts.ground)
                h, hv = height_map(D_i, N_i, cam_i)
                if gm.any():
                    _add(terms, "ch", loss_ch(h, gm, rig.camera_heights_gt[i], hv))

            # temporal context
            if taus and (opts.wants("photo_T") or opts.wants("pnc_T")):
                warped, cps = [], []
                for tau in taus:
                    X = context_transform(ContextSpec(ContextKind.TEMPORAL, i, i, tau - t), rig, st_t, st_tau[tau])
                    corr = correspondences(D_i, cam_i, cam_i, X, P_i)
                    if opts.wants("photo_T"):
                        warped.append(corr.sample(store.image(tau, i), store.valid(tau, i)))
                    if opts.wants("pnc_T"):
                        cps.append(compensated_prior(store.prior(tau, i), D_i, X, cam_i, cam_i, corr))
                if warped:
                    _add(terms, "photo_T", loss_temporal(I_i, warped, alpha))
                if cps:
                    _add(terms, "pnc_T", loss_pnc("T", prior_i, cps))

            # spatial, spatial-temporal and MVRC contexts per source camera
            ctxs = rig.spatial_contexts(i, opts.cv_types)
            if not opts.within_vehicle:
                ctxs = [c for c in ctxs if c.kind.cross_vehicle]
            for ctx in ctxs:
                j, g = ctx.source_cam, _group(ctx)
                cam_j = rig.cameras[j]
                X = context_transform(ctx, rig, st_t)
                corr = correspondences(D_i, cam_i, cam_j, X, P_i)
                recon_s, mask_s = corr.sample(store.image(t, j), store.valid(t, j))
                if opts.wants("photo_S"):
                    _add(terms, f"photo_S_{g}", loss_spatial(I_i, recon_s, mask_s, alpha))
                if opts.wants("sdc"):
                    d_tilde, m = reproject_depth(cam_j, cam_i, store.depth(t, j), inverse(X), D_i)
                    _add(terms, f"sdc_{g}", loss_sdc(D_i, d_tilde, m))
                if opts.wants("snc"):
                    _add(terms, f"snc_{g}", loss_snc(N_i, store.est_normals(t, j), D_i, X, cam_i, cam_j, corr))
                cp_s = None
                if opts.wants("pnc_S") or opts.wants("pnc_MVRC"):
                    cp_s = compensated_prior(store.prior(t, j), D_i, X, cam_i, cam_j, corr)
                if opts.wants("pnc_S"):
                    _add(terms, f"pnc_S_{g}", loss_pnc("S", prior_i, [cp_s]))

                if not taus:
                    continue
                st_kind = (ContextKind.CV_SPATIOTEMPORAL if ctx.kind.cross_vehicle
                           else ContextKind.WV_SPATIOTEMPORAL)
                recon_st, cps_st = [], []
                for tau in taus:
                    c2 = ContextSpec(st_kind, i, j, tau - t, ctx.cv_type)
                    X2 = context_transform(c2, rig, st_t, st_tau[tau])
                    corr2 = correspondences(D_i, cam_i, cam_j, X2, P_i)
                    if opts.wants("photo_ST") or opts.wants("photo_MVRC"):
                        recon_st.append(corr2.sample(store.image(tau, j), store.valid(tau, j)))
                    if opts.wants("pnc_ST") or opts.wants("pnc_MVRC"):
                        cps_st.append(compensated_prior(store.prior(tau, j), D_i, X2, cam_i, cam_j, corr2))
                if opts.wants("photo_ST"):
                    _add(terms, f"photo_ST_{g}", loss_spatiotemporal(I_i, recon_st, alpha))
                if opts.wants("photo_MVRC"):
                    _add(terms, f"photo_MVRC_{g}", loss_mvrc(recon_s, mask_s, recon_st, alpha))
                if opts.wants("pnc_ST"):
                    _add(terms, f"pnc_ST_{g}", loss_pnc("ST", prior_i, cps_st))
                if opts.wants("pnc_MVRC"):
                    _add(terms, f"pnc_MVRC_{g}", loss_pnc("MVRC", None, cps_st, cp_s))

        if opts.wants("vpc") and t + 1 in frame_set:
            nxt = state(t, t + 1)
            cross_next = manifest.transform(t + 1, "cross_vehicle")
            if st_t.cross_vehicle is None or cross_next is None:
                raise IncompleteStateError(f"frames {t}/{t + 1} lack cross-vehicle transforms")
            T_e = cross_vehicle_pose_error(nxt.joint_motion_front, nxt.joint_motion_rear,
                                           st_t.cross_vehicle, cross_next)
            _add(terms, "vpc", TermValue(loss_vpc(T_e, opts.vpc), 1))
    return terms


def compute_losses(manifest: Manifest, opts: LossOptions = LossOptions(),
                   weights: LossWeights | None = None, rig: RigConfig | None = None) -> LossReport:
    weights = weights or LossWeights(alpha=opts.alpha)
    return aggregate(compute_terms(manifest, opts, rig), weights)


def vpc_for_motions(front: SE3Transform, rear: SE3Transform, cross_t: SE3Transform,
                    cross_tau: SE3Transform, w: VpcWeights = VpcWeights()) -> float:
    return loss_vpc(cross_vehicle_pose_error(front, rear, cross_t, cross_tau), w)
