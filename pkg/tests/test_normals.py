import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from articugeo import synth
from articugeo.errors import DimensionMismatchError
from articugeo.geometry import CameraModel, SE3Transform, axis_angle, compose, inverse, random_transform
from articugeo.normals import (angular_error_deg, compensate_rotation, compensated_prior, loss_pnc, nc,
                               normal_from_depth, reproject_normals_direct)
from articugeo.rasters import NormalMap

CAM = CameraModel.from_fov(80, 56, 90.0)


def tilted_plane_depth(cam, n=(0.2, -0.5, -0.84), d=6.0):
    """Depth of the plane ``n . P = -d`` seen from the origin."""
    rays = cam.rays()
    n = np.asarray(n) / np.linalg.norm(n)
    return -d / (rays @ n), n


@settings(max_examples=20)
@given(st.integers(0, 2**32 - 1))
def test_normals_are_unit_and_scale_invariant(seed):
    D = np.random.default_rng(seed).uniform(2, 20, size=CAM.shape)
    N = normal_from_depth(D, CAM)
    norms = np.linalg.norm(N.vectors[N.valid], axis=-1)
    assert np.allclose(norms, 1.0, atol=1e-12)
    for s in (0.5, 3.0):
        Ns = normal_from_depth(s * D, CAM)
        assert np.array_equal(Ns.valid, N.valid)
        assert np.max(np.abs(Ns.vectors - N.vectors)) < 1e-12


def test_plane_normals_match_analytic_and_face_camera():
    D, n = tilted_plane_depth(CAM)
    N = normal_from_depth(D, CAM)
    assert not N.valid[-1].any() and not N.valid[:, -1].any()
    err = angular_error_deg(N.vectors, n, N.valid)
    assert np.nanmax(err) < 1e-6
    P = D[..., None] * CAM.rays()
    assert np.all(np.sum(N.vectors * P, axis=-1)[N.valid] < 0)
    raw = normal_from_depth(D, CAM, camera_facing=False)
    assert np.all(np.sum(raw.vectors * P, axis=-1)[raw.valid] > 0)


def test_invalid_depth_invalidates_stencil():
    D = np.full(CAM.shape, 5.0)
    D[10, 10] = 0.0
    N = normal_from_depth(D, CAM)
    assert not N.valid[10, 10] and not N.valid[9, 10] and not N.valid[10, 9]
    assert N.valid[11, 11]
    with pytest.raises(DimensionMismatchError):
        normal_from_depth(np.ones((3, 3)), CAM)


@settings(max_examples=20)
@given(st.integers(0, 2**32 - 1))
def test_normals_rotate_with_the_camera(seed):
    # rendering the same plane from a rotated camera rotates the normals
    rng = np.random.default_rng(seed)
    R = axis_angle(rng.normal(size=3), rng.uniform(0, 0.3))
    D, n = tilted_plane_depth(CAM)
    n_rot = R.T @ n  # plane normal in the rotated camera frame
    D2 = -6.0 / (CAM.rays() @ n_rot)
    if np.any(D2 <= 0):
        return
    N2 = normal_from_depth(D2, CAM)
    assert np.nanmax(angular_error_deg(N2.vectors, n_rot, N2.valid)) < 1e-6


def test_nc_is_sign_agnostic_and_bounded(rng):
    v = rng.normal(size=(8, 8, 3))
    v /= np.linalg.norm(v, axis=-1, keepdims=True)
    w = rng.normal(size=(8, 8, 3))
    w /= np.linalg.norm(w, axis=-1, keepdims=True)
    a, b = NormalMap(v, np.ones((8, 8), bool)), NormalMap(w, np.ones((8, 8), bool))
    assert float(nc(a, a)) < 1e-15
    assert float(nc(a, a.flipped())) < 1e-15
    assert 0.0 <= float(nc(a, b)) <= 1.0
    assert not nc(a, b, np.zeros((8, 8), bool)).present


def test_direct_reprojection_agrees_on_plane():
    D, n = tilted_plane_depth(CAM)
    N = normal_from_depth(D, CAM)
    X = SE3Transform(axis_angle([0, 1, 0], 0.02), [0.05, 0.0, 0.0])  # target -> source
    Dt = -(6.0 + n @ X.translation) / (CAM.rays() @ (X.rotation.T @ n))
    out, ok = reproject_normals_direct(N, Dt, X, CAM, CAM)
    assert ok.sum() > 0.8 * ok.size
    # sampled normals live in the source frame; R^T brings them to the target frame
    back = compensate_rotation(out, X.rotation)
    Nt = normal_from_depth(Dt, CAM)
    both = back.valid & Nt.valid
    assert float(nc(back, Nt, both)) < 1e-10


def test_compensated_prior_matches_target_normals_on_render(rig):
    traj = synth.make_trajectory(1)
    r = synth.render(synth.island_scene(), rig, traj, 0)
    wt = synth.camera_world_pose(rig, traj, 0, "C8")
    ws = synth.camera_world_pose(rig, traj, 0, "C2")
    X = compose(inverse(ws), wt)
    rec = compensated_prior(r.cameras["C2"].normals, r.cameras["C8"].depth, X,
                            rig.cameras["C8"], rig.cameras["C2"])
    assert rec.valid.sum() > 500
    term = loss_pnc("S", r.cameras["C8"].normals, [rec])
    assert float(term) < 1e-6


def test_loss_pnc_arguments():
    m = NormalMap(np.tile([0.0, 0.0, -1.0], (4, 4, 1)), np.ones((4, 4), bool))
    with pytest.raises(ValueError):
        loss_pnc("T", m, [])
    with pytest.raises(ValueError):
        loss_pnc("MVRC", m, [m])
    with pytest.raises(ValueError):
        loss_pnc("S", m, [m, m])
    with pytest.raises(ValueError):
        loss_pnc("Q", m, [m])
    with pytest.raises(ValueError):
        loss_pnc("T", None, [m])
    assert float(loss_pnc("MVRC", None, [m], spatial_recon=m)) == 0.0


def test_random_transform_preserves_nc_of_rotated_fields(rng):
    T = random_transform(rng)
    v = rng.normal(size=(6, 6, 3))
    v /= np.linalg.norm(v, axis=-1, keepdims=True)
    a = NormalMap(v, np.ones((6, 6), bool))
    rotated = compensate_rotation(NormalMap(v @ T.rotation.T, a.valid), T.rotation)
    assert float(nc(a, rotated)) < 1e-14
