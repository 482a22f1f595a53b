import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from articugeo import synth
from articugeo.errors import DimensionMismatchError
from articugeo.geometry import CameraModel, SE3Transform, axis_angle, compose, inverse
from articugeo.warping import (bilinear_sample, combine_masks, correspondences, make_stencil,
                               reproject_depth, warp_image)

CAM = CameraModel.from_fov(96, 64, 90.0)


def smooth_image(cam, seed=0):
    rng = np.random.default_rng(seed)
    v, u = np.mgrid[0:cam.height, 0:cam.width].astype(float)
    img = 0.5 + 0.2 * np.sin(u / rng.uniform(6, 9) + v / rng.uniform(5, 8)) + 0.1 * np.cos(v / 7.0)
    return img[..., None]


@settings(max_examples=50)
@given(a=st.floats(-2, 2), b=st.floats(-2, 2), c=st.floats(-5, 5),
       u=st.floats(0, 95), v=st.floats(0, 63))
def test_bilinear_exact_on_affine_rasters(a, b, c, u, v):
    vv, uu = np.mgrid[0:64, 0:96].astype(float)
    val, ok = bilinear_sample(a * uu + b * vv + c, np.array(u), np.array(v))
    assert ok
    assert np.isclose(val, a * u + b * v + c, atol=1e-9)


def test_out_of_bounds_and_nonfinite_are_invalid():
    img = np.ones((64, 96))
    u = np.array([-0.5, 95.5, 10.0, np.nan, 1e300, 95.0])
    v = np.array([10.0, 10.0, 63.01, 5.0, 5.0, 63.0])
    vals, ok = bilinear_sample(img, u, v)
    assert ok.tolist() == [False, False, False, False, False, True]
    assert np.all(vals[~ok] == 0.0)


def test_invalid_source_pixel_invalidates_neighbours():
    img = np.ones((64, 96))
    valid = np.ones((64, 96), bool)
    valid[10, 20] = False
    _, ok = bilinear_sample(img, np.array([19.5, 20.0, 22.0]), np.array([9.5, 10.0, 10.0]), valid)
    assert ok.tolist() == [False, False, True]


def test_identity_warp_is_identity():
    D = np.full(CAM.shape, 5.0)
    img = smooth_image(CAM)
    out, mask = warp_image(CAM, CAM, D, SE3Transform(), img)
    assert mask.all()
    assert np.max(np.abs(out - img)) < 1e-6


def test_mask_monotone_in_depth_validity(rng):
    D = rng.uniform(2, 10, size=CAM.shape)
    X = SE3Transform(axis_angle([0, 1, 0], 0.1), [0.3, 0, 0])
    img = smooth_image(CAM)
    _, m_full = warp_image(CAM, CAM, D, X, img)
    D2 = np.where(rng.uniform(size=D.shape) < 0.3, 0.0, D)
    _, m_less = warp_image(CAM, CAM, D2, X, img)
    assert not np.any(m_less & ~m_full)


def _wall(G):
    p0, p1 = G.apply([8.0, 20.0, 0.0]), G.apply([8.0, -20.0, 0.0])
    z = G.translation[2]
    return synth.Scene([synth.Wall(tuple(p0[:2]), tuple(p1[:2]), z - 20.0, z + 20.0, synth.solid_texture(2))])


def test_warping_equivariant_under_common_motion():
    world_t = synth.camera_extrinsic(0.0, 0.0, 0.0, 5.0)
    X = SE3Transform(axis_angle([0, 1, 0], 0.05), [0.4, 0.1, 0.0])
    world_s = compose(world_t, inverse(X))
    # yaw plus translation keeps the wall vertical
    G = SE3Transform(axis_angle([0.0, 0.0, 1.0], 0.7), [3.0, -2.0, 0.5])

    def run(scene, wt, ws):
        Xr = compose(inverse(ws), wt)
        dt = synth.render_camera(scene, CAM, wt).depth
        ds = synth.render_camera(scene, CAM, ws).depth
        corr = correspondences(dt, CAM, CAM, Xr)
        return corr, reproject_depth(CAM, CAM, ds, inverse(Xr), dt)

    c1, (d1, m1) = run(_wall(SE3Transform()), world_t, world_s)
    c2, (d2, m2) = run(_wall(G), compose(G, world_t), compose(G, world_s))
    assert m1.sum() > 0.5 * m1.size
    assert np.array_equal(c1.mask, c2.mask) and np.array_equal(m1, m2)
    assert np.max(np.abs(c1.u - c2.u)[c1.mask]) < 1e-8
    assert np.max(np.abs(c1.v - c2.v)[c1.mask]) < 1e-8
    assert np.max(np.abs(d1 - d2)[m1]) < 1e-9


def test_reproject_depth_plane_shift():
    d_src = np.full(CAM.shape, 10.0)
    # target sits 1 m further forward, so the plane is at 9 m
    fwd = SE3Transform.from_translation([0.0, 0.0, -1.0])
    d_tilde, m = reproject_depth(CAM, CAM, d_src, fwd, np.full(CAM.shape, 9.0))
    assert m[5:-5, 5:-5].all()
    assert np.max(np.abs(d_tilde[m] - 9.0)) < 1e-12


def test_reproject_depth_matches_cross_view_renders():
    from articugeo.rig import ContextKind, ContextSpec, RigState, context_transform

    rig = synth.default_rig()
    traj = synth.make_trajectory(1)
    r = synth.render(synth.island_scene(), rig, traj, 0)
    X = context_transform(ContextSpec(ContextKind.CV_SPATIAL, "C8", "C2"), rig, RigState(0, traj.hinge(0)))
    ci, cj = rig.cameras["C8"], rig.cameras["C2"]
    d_tilde, m = reproject_depth(cj, ci, r.cameras["C2"].depth, inverse(X), r.cameras["C8"].depth)
    assert m.sum() > 1000
    agree = np.abs(d_tilde - r.cameras["C8"].depth)[m]
    # on oblique surfaces z is projective in the source pixel grid, so bilinear
    # sampling leaves a small interpolation residual (exact on fronto-parallel walls)
    assert np.median(agree) < 1e-4
    assert np.mean(agree < 1e-3) > 0.95


def test_dimension_checks():
    with pytest.raises(DimensionMismatchError):
        correspondences(np.ones((10, 10)), CAM, CAM, SE3Transform())
    with pytest.raises(DimensionMismatchError):
        warp_image(CAM, CAM, np.ones(CAM.shape), SE3Transform(), np.ones((5, 5)))
    with pytest.raises(DimensionMismatchError):
        reproject_depth(CAM, CAM, np.ones((3, 3)), SE3Transform(), np.ones(CAM.shape))


def test_stencil_handles_last_row_and_column():
    st_ = make_stencil(np.array([95.0]), np.array([63.0]), 64, 96)
    assert st_.inside.all()


def test_combine_masks():
    a = np.array([[True, False], [True, True]])
    b = np.array([[True, True], [False, True]])
    assert combine_masks([a, b]).tolist() == [[True, False], [False, True]]
    with pytest.raises(ValueError):
        combine_masks([])
