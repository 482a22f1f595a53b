"""Property suites behind ``articugeo verify``.

Each suite returns a list of :class:`Check` records.  Every tolerance lives
in :data:`DEFAULT_TOLERANCES` under ``"<suite>.<check>"`` and can be
overridden, so each reported number can be reproduced by flag.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import synth
from .geometry import (CameraModel, SE3Transform, axis_angle, compose, inverse, project,
                       random_transform, rotation_angle, rot_z, unproject)
from .gradcheck import run_gradchecks, synthetic_fixture
from .ground import ground_mask, height_map, loss_ch
from .icp import PointCloud, icp_coarse_to_fine, icp_register, IcpConfig
from .losses import loss_mvrc, loss_spatial, masked_mean, pe, ssim
from .metrics import evaluate
from .normals import (angular_error_deg, compensate_rotation, compensated_prior, loss_pnc, nc,
                      normal_from_depth, reproject_normals_direct, reproject_normals_via_depth)
from .pose import cross_vehicle_pose_error, loss_vpc, VpcWeights
from .rig import CV_PAIRS, ContextKind, ContextSpec, RigState, context_transform, cv_pairs
from .warping import correspondences, reproject_depth

DEFAULT_TOLERANCES = {
    "geometry.roundtrip": 1e-9,
    "geometry.inverse": 1e-12,
    "closure.composition": 0.0,
    "closure.vpc_loop": 1e-9,
    "warping.identity": 1e-6,
    "warping.translate": 1e-6,
    "losses.self_pe": 1e-12,
    "losses.mvrc_identical": 1e-12,
    "normals.rotation_equivariance": 0.1,
    "normals.translation_invariance": 0.1,
    "normals.scale_invariance": 1e-6,
    "normals.c1_agreement": 0.5,
    "ground.ch_linearity": 0.01,
    "ground.normal_scale_change": 1e-3,
    "pose.vpc_identity": 1e-8,
    "pose.vpc_translation": 1e-6,
    "icp.self_registration": 1e-6,
    "icp.rotation_deg": 0.5,
    "icp.translation_m": 0.02,
    "metrics.identity": 1e-12,
    "metrics.abs_rel": 1e-12,
    "gradcheck.rel_err": 1e-3,
    "synth.ray_plane": 1e-9,
    "synth.wall_depth": 1e-9,
    "synth.cross_view": 1e-6,
}

DEFAULT_OPTIONS = {
    "closure_states": 1000,
    "icp_trials": 3,
    "icp_beams": 64,
    "gradcheck_pixels": 100,
}


@dataclass
class Check:
    name: str
    passed: bool
    worst: float
    tol: float
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f"  {self.detail}" if self.detail else ""
        return f"{status} {self.name}: worst {self.worst:.3e} (tol {self.tol:.3e}){extra}"


def _check(name, worst, tol, detail="", le=True) -> Check:
    worst = float(worst)
    ok = bool(np.isfinite(worst) and (worst <= tol if le else worst < tol))
    return Check(name, ok, worst, float(tol), detail)


# --- shared fixtures ----------------------------------------------------------------

def look_pose(x, y, z, yaw_deg=0.0, pitch_deg=0.0) -> SE3Transform:
    """World <- camera for a camera at ``(x, y, z)`` looking along world yaw, pitched down."""
    return synth.camera_extrinsic(x, y, z, yaw_deg, pitch_deg)


def test_camera(width=320, height=192, hfov_deg=100.0) -> CameraModel:
    return CameraModel.from_fov(width, height, hfov_deg)


def view_pair(scene, world_from_target: SE3Transform, X: SE3Transform, cam: CameraModel):
    """Render target and source views; ``X`` maps target to source camera coordinates."""
    world_from_source = compose(world_from_target, inverse(X))
    return (synth.render_camera(scene, cam, world_from_target),
            synth.render_camera(scene, cam, world_from_source))


def interior(mask, margin=3):
    m = np.asarray(mask, dtype=bool).copy()
    m[:margin] = m[-margin:] = False
    m[:, :margin] = m[:, -margin:] = False
    return m


def depth_edges(depth, jump=0.5, band=5):
    """Pixels within ``band`` of a depth discontinuity (or of a hit/miss edge)."""
    d = np.asarray(depth, float)
    hi = ndimage.maximum_filter(d, size=3)
    lo = ndimage.minimum_filter(d, size=3)
    edge = (hi - lo) > jump
    return ndimage.binary_dilation(edge, iterations=band)


def planar_ground_pair(yaw_deg=4.0, shift=(0.3, -0.2, 0.1), height=1.5, pitch_deg=40.0):
    cam = test_camera()
    X = SE3Transform(axis_angle([0.0, 1.0, 0.0], np.deg2rad(yaw_deg)), shift)
    t, s = view_pair(synth.ground_scene(), look_pose(0.0, 0.0, height, 0.0, pitch_deg), X, cam)
    return cam, X, t, s


def step_scene() -> synth.Scene:
    """Box floating in front of a wall: a clean depth step."""
    tex = synth.solid_texture(3)
    return synth.Scene([synth.Wall((12.0, 20.0), (12.0, -20.0), -20.0, 30.0, tex),
                        synth.Box((6.0, -1.0, 0.5), (7.0, 1.0, 2.5), tex)])


def sphere_scene() -> synth.Scene:
    return synth.Scene([synth.Sphere((8.0, 0.0, 1.5), 3.0, synth.solid_texture(4))])


def normal_errors(scene, X, band=5):
    """Direct vs depth-interpolated reprojection of depth-derived source normals.

    Both methods start from the source depth: the direct one samples its
    normals (then undoes the rotation), the other reprojects the depth and
    differentiates it in the target view.  Returns per-pixel angular errors
    (deg) of each against the target's analytic normals, their mutual
    disagreement, the common valid mask and the discontinuity band.
    """
    cam = test_camera()
    t, s = view_pair(scene, look_pose(0.0, 0.0, 1.5), X, cam)
    src_n = normal_from_depth(s.depth, cam)
    direct, dv = reproject_normals_direct(src_n, t.depth, X, cam, cam)
    direct = compensate_rotation(direct, X.rotation)
    via, vv = reproject_normals_via_depth(s.depth, t.depth, X, cam, cam)
    ok = interior(dv & vv & t.normals.valid)
    e_direct = angular_error_deg(direct.vectors, t.normals.vectors, ok)
    e_via = angular_error_deg(via.vectors, t.normals.vectors, ok)
    mutual = angular_error_deg(direct.vectors, via.vectors, ok)
    near = depth_edges(np.where(t.depth > 0, t.depth, 1e3), band=band)
    return e_direct, e_via, mutual, ok, near


# --- suites -------------------------------------------------------------------------

def suite_geometry(tol, opts, rng):
    cam = test_camera()
    worst = 0.0
    for _ in range(200):
        p = rng.uniform([0, 0], [cam.width - 1, cam.height - 1])
        d = rng.uniform(0.5, 80.0)
        q, z = project(unproject(p, d, cam), cam)
        worst = max(worst, np.max(np.abs(q - p)), abs(z - d))
    inv = 0.0
    for _ in range(200):
        T = random_transform(rng, np.pi, 10.0)
        inv = max(inv, np.max(np.abs(compose(T, inverse(T)).as_matrix() - np.eye(4))))
    return [_check("roundtrip", worst, tol["geometry.roundtrip"], "project(unproject(p, d)) vs (p, d)"),
            _check("inverse", inv, tol["geometry.inverse"], "T o T^-1 vs I")]


def suite_closure(tol, opts, rng):
    rig = synth.default_rig()
    worst = 0.0
    for _ in range(int(opts["closure_states"])):
        t_state = RigState(0, random_transform(rng, 0.5, 5.0))
        tau_state = RigState(1, None, random_transform(rng, 0.2, 1.0), random_transform(rng, 0.2, 1.0))
        cv_type = int(rng.integers(0, 3))
        pairs = cv_pairs(cv_type)
        a, b = pairs[int(rng.integers(0, len(pairs)))]
        i, j = (a, b) if rng.random() < 0.5 else (b, a)
        st = context_transform(ContextSpec(ContextKind.CV_SPATIOTEMPORAL, i, j, 1, cv_type), rig, t_state, tau_state)
        temporal = context_transform(ContextSpec(ContextKind.TEMPORAL, j, j, 1), rig, t_state, tau_state)
        spatial = context_transform(ContextSpec(ContextKind.CV_SPATIAL, i, j, 0, cv_type), rig, t_state)
        worst = max(worst, np.max(np.abs(st.as_matrix() - compose(temporal, spatial).as_matrix())))
    table = {0: [("C8", "C2"), ("C7", "C3")],
             1: [("C9", "C2"), ("C6", "C3"), ("C8", "C1"), ("C7", "C4")],
             2: [("C5", "C2"), ("C5", "C3"), ("C9", "C1"), ("C6", "C4"), ("C8", "C0"), ("C7", "C0")]}
    table_ok = all(cv_pairs(k) == v for k, v in table.items()) and set(CV_PAIRS) == {0, 1, 2}
    traj = synth.make_trajectory(6)
    loop = 0.0
    for t in range(5):
        f, r, c_t, c_tau = synth.articulated_motion(traj, t, t + 1)
        T_e = cross_vehicle_pose_error(f, r, c_t, c_tau)
        loop = max(loop, np.max(np.abs(T_e.as_matrix() - np.eye(4))))
    return [_check("composition", worst, tol["closure.composition"],
                   f"CV-ST vs temporal o CV-S over {opts['closure_states']} states"),
            Check("cv_pairs_table", table_ok, 0.0 if table_ok else 1.0, 0.0, "pair list per CV type"),
            _check("vpc_loop", loop, tol["closure.vpc_loop"], "T_e vs I on articulated motions")]


def suite_warping(tol, opts, rng):
    cam = test_camera()
    v, u = np.mgrid[0:cam.height, 0:cam.width]
    depth = 10.0 + 0.5 * np.sin(u / 40.0) + 0.3 * np.cos(v / 30.0)
    d_tilde, m = reproject_depth(cam, cam, depth, SE3Transform(), depth)
    ident = np.max(np.abs(d_tilde - depth)[interior(m)])
    # target camera 1 m closer to the plane than the source: source -> target shifts z by -1
    d9, m9 = reproject_depth(cam, cam, np.full(cam.shape, 10.0), SE3Transform.from_translation([0.0, 0.0, -1.0]),
                             np.full(cam.shape, 9.0))
    trans = np.max(np.abs(d9 - 9.0)[interior(m9)])
    return [_check("identity", ident, tol["warping.identity"], "reproject with X = I"),
            _check("translate", trans, tol["warping.translate"], "plane at 10 m after 1 m forward move")]


def suite_losses(tol, opts, rng):
    img = rng.uniform(0, 1, size=(48, 64, 3))
    mask = np.ones((48, 64), bool)
    self_pe = float(masked_mean(pe(img, img, mask), mask))
    rec = rng.uniform(0, 1, size=img.shape)
    mvrc = float(loss_mvrc(rec, mask, [(rec, mask)]))
    s = ssim(img, rec)
    sym = np.max(np.abs(s - ssim(rec, img)))
    empty = loss_spatial(img, rec, np.zeros_like(mask))
    return [_check("self_pe", abs(self_pe), tol["losses.self_pe"], "pe(I, I)"),
            _check("mvrc_identical", abs(mvrc), tol["losses.mvrc_identical"], "identical reconstructions"),
            _check("ssim_symmetric", sym, 1e-12, "SSIM(x, y) vs SSIM(y, x)"),
            Check("empty_mask_absent", not empty.present, float(empty.count), 0.0, "zero-overlap term is absent")]


def suite_normals(tol, opts, rng):
    cam, X, t, s = planar_ground_pair()
    direct, dv = reproject_normals_direct(s.normals, t.depth, X, cam, cam)
    expected = t.normals.vectors @ X.rotation.T
    ok = interior(dv & t.normals.valid)
    rot_err = np.nanmean(angular_error_deg(direct.vectors, expected, ok))
    cam, Xt, t2, s2 = planar_ground_pair(yaw_deg=0.0, shift=(0.4, 0.1, -0.3))
    d2, v2 = reproject_normals_direct(s2.normals, t2.depth, Xt, cam, cam)
    trans_err = np.nanmean(angular_error_deg(d2.vectors, t2.normals.vectors, interior(v2 & t2.normals.valid)))
    base = normal_from_depth(t.depth, cam)
    scale_err = 0.0
    for k in (0.5, 2.0, 3.0):
        scaled = normal_from_depth(k * t.depth, cam)
        scale_err = max(scale_err, np.nanmax(angular_error_deg(scaled.vectors, base.vectors, base.valid & scaled.valid)))
    X = SE3Transform(rot_z(np.deg2rad(3.0)) @ axis_angle([0, 1, 0], np.deg2rad(3.0)), [0.4, 0.0, 0.0])
    e_direct, e_via, _, ok, near = normal_errors(step_scene(), X)
    band = ok & near
    step_direct, step_via = np.nanmean(e_direct[band]), np.nanmean(e_via[band])
    _, _, mutual, ok, near = normal_errors(sphere_scene(), X)
    c1 = np.nanmean(mutual[ok & ~near])
    return [_check("rotation_equivariance", rot_err, tol["normals.rotation_equivariance"],
                   "mean deg, direct vs R N_target"),
            _check("translation_invariance", trans_err, tol["normals.translation_invariance"], "mean deg, R = I"),
            _check("scale_invariance", scale_err, tol["normals.scale_invariance"], "max deg over s in {0.5, 2, 3}"),
            Check("direct_beats_depth_at_step", bool(step_via > step_direct), step_via - step_direct, 0.0,
                  f"band mean deg: direct {step_direct:.3f}, via depth {step_via:.3f}"),
            _check("c1_agreement", c1, tol["normals.c1_agreement"], "sphere, mean deg between the two methods")]


def ground_scale_terms(scales=(0.5, 2.0, 3.0), height=1.5, pitch_deg=2.0):
    """CH, NC and spatial PNC on a ground-only pair for each depth scale (index 0 is scale 1).

    The camera is nearly level, as on the rig, so the ground test of the
    prior normals applies.
    """
    cam, X, t, s = planar_ground_pair(height=height, pitch_deg=pitch_deg)
    gm = ground_mask(t.normals, t.depth, cam)
    out = []
    for k in (1.0,) + tuple(scales):
        D = k * t.depth
        N = normal_from_depth(D, cam)
        h, hv = height_map(D, N, cam)
        ch = float(loss_ch(h, gm, height, hv))
        nc_v = float(nc(N, t.normals))
        cp = compensated_prior(s.normals, D, X, cam, cam)
        pnc_v = float(loss_pnc("S", t.normals, [cp]))
        out.append((k, ch, nc_v, pnc_v))
    return out


def suite_ground(tol, opts, rng):
    height = 1.5
    rows = ground_scale_terms(height=height)
    _, _, nc0, pnc0 = rows[0]
    lin, change = 0.0, 0.0
    for k, ch, nc_v, pnc_v in rows[1:]:
        expected = abs(k - 1.0) * height
        lin = max(lin, abs(ch - expected) / expected)
        change = max(change, abs(nc_v - nc0), abs(pnc_v - pnc0))
    return [_check("ch_linearity", lin, tol["ground.ch_linearity"], "rel. error of L_CH vs |s-1| h_gt"),
            _check("normal_scale_change", change, tol["ground.normal_scale_change"], "NC/PNC change under scaling",
                   le=False)]


def vpc_perturbation_curve(magnitudes=(0.01, 0.05, 0.1, 0.5), w=VpcWeights(), frame=0, direction=(1.0, 0.0, 0.0)):
    traj = synth.make_trajectory(frame + 2)
    f, r, c_t, c_tau = synth.articulated_motion(traj, frame, frame + 1)
    d = np.asarray(direction, float) / np.linalg.norm(direction)
    base = loss_vpc(cross_vehicle_pose_error(f, r, c_t, c_tau), w)
    vals = [loss_vpc(cross_vehicle_pose_error(f, compose(SE3Transform.from_translation(m * d), r), c_t, c_tau), w)
            for m in magnitudes]
    return base, vals


def suite_pose(tol, opts, rng):
    w = VpcWeights()
    base, vals = vpc_perturbation_curve(w=w)
    err = abs(vals[2] - 0.1 * w.lambda_t)
    mono = bool(np.all(np.diff(vals) > 0))
    return [_check("vpc_identity", base, tol["pose.vpc_identity"], "L_VPC on consistent motions", le=False),
            _check("vpc_translation", err, tol["pose.vpc_translation"], "0.1 m perturbation vs 0.1 lambda_t"),
            Check("vpc_monotone", mono, 0.0, 0.0, "L_VPC over {0.01, 0.05, 0.1, 0.5} m: "
                  + ", ".join(f"{v:.4g}" for v in vals))]


def random_init(gt: SE3Transform, rng, max_deg=10.0, max_trans=0.3, min_frac=0.5) -> SE3Transform:
    """Perturb ``gt`` by a rotation and a translation drawn from the documented basin."""
    ang = np.deg2rad(rng.uniform(min_frac, 1.0) * max_deg)
    dt = rng.normal(size=3)
    dt *= rng.uniform(min_frac, 1.0) * max_trans / np.linalg.norm(dt)
    return compose(SE3Transform(axis_angle(rng.normal(size=3), ang), dt), gt)


def icp_trial(trial: int, beams: int = 64, overlap: float = 0.6, noise: float = 0.01):
    """One seeded calibration trial on the yard scene; returns errors and stage results."""
    scene = synth.calibration_scene()
    traj = synth.make_trajectory(max(20, trial + 1), articulation_amplitude_deg=15.0)
    pattern = synth.LidarPattern(1800, tuple(np.linspace(-30.67, 10.67, beams)))
    frame = trial % len(traj)
    front, rear, gt, achieved = synth.calibration_pair(scene, traj, frame, pattern, noise, overlap, seed=trial)
    init = random_init(gt, np.random.default_rng(1000 + trial))
    stages = icp_coarse_to_fine(rear, front, init)
    E = compose(inverse(gt), stages[-1].transform)
    return np.degrees(rotation_angle(E.rotation)), float(np.linalg.norm(E.translation)), achieved, stages


def history_monotone(stages) -> bool:
    h = np.concatenate([s.history for s in stages])
    return bool(np.all(np.diff(h) <= 0.0))


def suite_icp(tol, opts, rng):
    pts = rng.uniform(-10, 10, size=(2000, 3))
    T = SE3Transform(axis_angle([0.2, 0.1, 1.0], 0.05), [0.1, -0.05, 0.02])
    res = icp_register(PointCloud(pts), PointCloud(T.apply(pts)), IcpConfig(max_iterations=100, convergence_eps=1e-12))
    self_err = np.max(np.abs(res.transform.as_matrix() - T.as_matrix()))
    rot, trans, mono = 0.0, 0.0, True
    n = int(opts["icp_trials"])
    for k in range(n):
        r, t, _, stages = icp_trial(k, int(opts["icp_beams"]))
        rot, trans = max(rot, r), max(trans, t)
        mono &= history_monotone(stages)
    return [_check("self_registration", self_err, tol["icp.self_registration"], "noiseless, small offset"),
            _check("rotation_deg", rot, tol["icp.rotation_deg"], f"worst of {n} cropped trials"),
            _check("translation_m", trans, tol["icp.translation_m"], f"worst of {n} cropped trials"),
            Check("residual_monotone", mono, 0.0, 0.0, "truncated RMS never increases")]


def suite_metrics(tol, opts, rng):
    gt = rng.uniform(1.0, 80.0, size=(32, 48))
    ident = evaluate(gt, gt)
    id_err = max(ident.abs_rel, ident.sq_rel, ident.rmse, ident.rmse_log, 1 - ident.delta1)
    r12 = evaluate(1.2 * gt, gt)
    r13 = evaluate(1.3 * gt, gt)
    capped = evaluate(gt, np.where(gt > 50, 150.0, gt))
    return [_check("identity", id_err, tol["metrics.identity"], "evaluate(g, g)"),
            _check("abs_rel", abs(r12.abs_rel - 0.2), tol["metrics.abs_rel"], f"1.2 gt: delta1 {r12.delta1}"),
            Check("delta_fixed_points", r12.delta1 == 1.0 and r13.delta1 == 0.0, r13.delta1, 0.0,
                  "delta1(1.2 gt) = 1, delta1(1.3 gt) = 0"),
            Check("max_depth_cap", capped.pixel_count == int(np.sum(gt <= 50)), float(capped.pixel_count), 0.0,
                  "gt > 100 m excluded")]


def suite_gradcheck(tol, opts, rng):
    results = run_gradchecks(synthetic_fixture(0), n=int(opts["gradcheck_pixels"]), tol=tol["gradcheck.rel_err"])
    return [Check(r.name, r.passed, r.max_rel_err, r.tol, f"{r.checked} pixels") for r in results]


def suite_synth(tol, opts, rng):
    cam = test_camera()
    h, pitch = 1.5, 15.0
    pose = look_pose(0.0, 0.0, h, 0.0, pitch)
    r = synth.render_camera(synth.ground_scene(), cam, pose)
    rays_w = cam.rays() @ pose.rotation.T
    down = -rays_w[..., 2]
    expected = np.where(down > 0, h / np.where(down > 0, down, 1.0), 0.0)
    ray_err = np.max(np.abs(r.depth - expected)[down > 1e-3])
    tex = synth.solid_texture(1)
    wall = synth.Scene([synth.Wall((10.0, 50.0), (10.0, -50.0), -50.0, 50.0, tex)])
    w = synth.render_camera(wall, cam, look_pose(0.0, 0.0, 0.0))
    wall_err = max(np.max(np.abs(w.depth - 10.0)), np.max(np.abs(w.normals.vectors - [0.0, 0.0, -1.0])))
    X = SE3Transform.from_translation([0.5, 0.2, 0.0])
    t, s = view_pair(wall, look_pose(0.0, 0.0, 0.0), X, cam)
    d_tilde, m = reproject_depth(cam, cam, s.depth, inverse(X), t.depth)
    cross = np.max(np.abs(d_tilde - t.depth)[interior(m)])
    return [_check("ray_plane", ray_err, tol["synth.ray_plane"], "ground depth vs h / sin(angle)"),
            _check("wall_depth", wall_err, tol["synth.wall_depth"], "fronto-parallel wall at 10 m"),
            _check("cross_view", cross, tol["synth.cross_view"], "reprojected GT depth agreement")]


SUITES = {
    "geometry": suite_geometry,
    "closure": suite_closure,
    "warping": suite_warping,
    "losses": suite_losses,
    "normals": suite_normals,
    "ground": suite_ground,
    "pose": suite_pose,
    "icp": suite_icp,
    "metrics": suite_metrics,
    "gradcheck": suite_gradcheck,
    "synth": suite_synth,
}


def run_suite(name: str, tolerances: dict | None = None, options: dict | None = None,
              seed: int = 0) -> list[Check]:
    """Run one suite (or ``"all"``) with optional tolerance and option overrides."""
    tol = dict(DEFAULT_TOLERANCES)
    for k, v in (tolerances or {}).items():
        if k not in tol:
            raise KeyError(f"unknown tolerance {k!r}")
        tol[k] = float(v)
    opts = dict(DEFAULT_OPTIONS)
    for k, v in (options or {}).items():
        if k not in opts:
            raise KeyError(f"unknown verify option {k!r}")
        opts[k] = v
    names = list(SUITES) if name == "all" else [name]
    out = []
    for n in names:
        if n not in SUITES:
            raise KeyError(f"unknown suite {n!r}; choose from {', '.join(SUITES)} or all")
        rng = np.random.default_rng(seed)
        for c in SUITES[n](tol, opts, rng):
            c.name = f"{n}.{c.name}"
            out.append(c)
    return out


def format_report(checks: list[Check]) -> str:
    lines = [c.line() for c in checks]
    passed = sum(c.passed for c in checks)
    lines.append(f"{passed}/{len(checks)} checks passed")
    return "\n".join(lines) + "\n"
