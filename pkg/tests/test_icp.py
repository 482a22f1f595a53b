import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from articugeo.errors import DegenerateGeometryError, EmptyOverlapError, FormatError
from articugeo.geometry import CameraModel, SE3Transform, axis_angle, compose, inverse, random_transform
from articugeo.icp import (IcpConfig, PointCloud, icp_coarse_to_fine, icp_register, project_cloud_to_image,
                           read_ply, rigid_align, write_ply)

seeds = st.integers(0, 2**32 - 1)


def structured_cloud(rng, n=1500):
    """Points on three orthogonal patches so no direction is unconstrained."""
    a = rng.uniform(-3, 3, size=(n, 2))
    floor = np.c_[a, np.zeros(n)]
    wall = np.c_[a[:, 0], np.full(n, 3.0), a[:, 1] + 3]
    side = np.c_[np.full(n, -3.0), a[:, 0], a[:, 1] + 3]
    return np.vstack([floor, wall, side])


def test_self_registration_is_identity(rng):
    pts = structured_cloud(rng)
    res = icp_register(PointCloud(pts), PointCloud(pts))
    assert res.transform.allclose(SE3Transform(), atol=1e-12)
    assert res.rms_residual < 1e-12 and res.inlier_fraction == 1.0


@settings(max_examples=20, deadline=None)
@given(seeds)
def test_rigid_align_recovers_exact_transform(seed):
    rng = np.random.default_rng(seed)
    src = rng.normal(size=(50, 3))
    T = random_transform(rng)
    est = rigid_align(src, T.apply(src))
    assert est.allclose(T, atol=1e-9)
    assert np.isclose(np.linalg.det(est.rotation), 1.0)


def test_degenerate_geometry_is_reported():
    line = np.c_[np.linspace(0, 1, 20), np.zeros(20), np.zeros(20)]
    with pytest.raises(DegenerateGeometryError):
        rigid_align(line, line + 1.0)
    with pytest.raises(DegenerateGeometryError):
        rigid_align(line[:2], line[:2])


def test_empty_overlap_is_reported(rng):
    pts = structured_cloud(rng, 200)
    with pytest.raises(EmptyOverlapError):
        icp_register(PointCloud(pts), PointCloud(pts + 100.0))
    with pytest.raises(EmptyOverlapError):
        icp_register(PointCloud(np.zeros((0, 3))), PointCloud(pts))


def test_small_offset_converges_and_history_is_monotone(rng):
    pts = structured_cloud(rng)
    T = SE3Transform(axis_angle([0.3, -0.2, 1.0], np.deg2rad(4.0)), [0.15, -0.1, 0.05])
    res = icp_register(PointCloud(pts), PointCloud(T.apply(pts)), IcpConfig(100, 1e-12))
    assert res.transform.allclose(T, atol=1e-6)
    assert np.all(np.diff(res.history) <= 0.0)


@settings(max_examples=10, deadline=None)
@given(seeds)
def test_registration_is_left_invariant(seed):
    # moving both clouds by G conjugates the answer and changes nothing else
    rng = np.random.default_rng(seed)
    pts = structured_cloud(rng, 600)
    T = SE3Transform(axis_angle(rng.normal(size=3), 0.05), rng.uniform(-0.1, 0.1, 3))
    G = random_transform(rng, max_trans=5.0)
    cfg = IcpConfig(60, 1e-10)
    base = icp_register(PointCloud(pts), PointCloud(T.apply(pts)), cfg)
    moved = icp_register(PointCloud(G.apply(pts)), PointCloud(G.apply(T.apply(pts))),
                         IcpConfig(60, 1e-10, initial_guess=SE3Transform()))
    expect = compose(G, compose(base.transform, inverse(G)))
    assert moved.transform.allclose(expect, atol=1e-6)


def test_coarse_to_fine_chains_stages(rng):
    pts = structured_cloud(rng)
    T = SE3Transform(axis_angle([0, 0, 1], np.deg2rad(6.0)), [0.25, 0.1, 0.0])
    stages = icp_coarse_to_fine(PointCloud(pts), PointCloud(T.apply(pts)), gates=(1.0, 0.1))
    assert len(stages) == 2
    assert stages[-1].transform.allclose(T, atol=1e-5)
    h = np.concatenate([s.history for s in stages])
    assert np.all(np.diff(h) <= 0.0)
    with pytest.raises(ValueError):
        icp_coarse_to_fine(PointCloud(pts), PointCloud(pts), gates=())


def test_config_validation():
    with pytest.raises(ValueError):
        IcpConfig(max_iterations=0)
    with pytest.raises(ValueError):
        IcpConfig(max_correspondence_dist=-1.0)


def test_projection_keeps_nearest_point():
    cam = CameraModel(10.0, 10.0, 4.0, 4.0, 10, 10)
    pts = np.array([[0.0, 0.0, 5.0], [0.0, 0.0, 2.0], [0.0, 0.0, -1.0], [100.0, 0.0, 1.0]])
    depth = project_cloud_to_image(PointCloud(pts), SE3Transform(), cam)
    # the far point is occluded, the one behind and the one off-image are dropped
    assert depth[4, 4] == 2.0 and np.count_nonzero(depth) == 1


def test_ply_roundtrip_and_errors(tmp_path, rng):
    cloud = PointCloud(rng.normal(size=(25, 3)))
    path = tmp_path / "c.ply"
    write_ply(path, cloud)
    back = read_ply(path)
    assert np.allclose(back.points, cloud.points, rtol=1e-8)
    bad = tmp_path / "bad.ply"
    bad.write_text("ply\nformat ascii 1.0\nelement vertex 2\nend_header\n1 2 3\n1 x 3\n")
    with pytest.raises(FormatError, match="bad.ply:6"):
        read_ply(bad)
    bad.write_text("not a ply\n")
    with pytest.raises(FormatError, match="bad.ply:1"):
        read_ply(bad)
    bad.write_text("ply\nformat binary_little_endian 1.0\n")
    with pytest.raises(FormatError):
        read_ply(bad)
    with pytest.raises(FileNotFoundError, match="nope.ply"):
        read_ply(tmp_path / "nope.ply")
