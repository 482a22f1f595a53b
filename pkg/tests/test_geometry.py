import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from articugeo.errors import BehindCameraError, InvalidDepthError
from articugeo.geometry import (CameraModel, SE3Transform, axis_angle, cabs, compose, inverse,
                                orthonormalize, project, project_points, random_transform,
                                rotation_angle, rotation_error_frobenius, unproject, unproject_depth)

CAM = CameraModel.from_fov(320, 192, 100.0)

seeds = st.integers(0, 2**32 - 1)


@given(u=st.floats(0, 319), v=st.floats(0, 191), d=st.floats(0.1, 500.0))
def test_project_unproject_roundtrip(u, v, d):
    P = unproject((u, v), d, CAM)
    assert P[2] == d  # depth preserved exactly
    p, z = project(P, CAM)
    assert z == d
    assert np.allclose(p, [u, v], rtol=1e-9, atol=1e-9)


@given(seeds)
def test_group_axioms(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (random_transform(rng, max_trans=5.0) for _ in range(3))
    left = compose(compose(a, b), c)
    right = compose(a, compose(b, c))
    assert left.allclose(right, atol=1e-9)
    assert compose(a, inverse(a)).allclose(SE3Transform(), atol=1e-9)
    assert compose(inverse(a), a).allclose(SE3Transform(), atol=1e-9)
    assert compose(SE3Transform(), a).allclose(a, atol=0)


@given(seeds)
def test_compose_applies_right_first(seed):
    rng = np.random.default_rng(seed)
    a, b = random_transform(rng), random_transform(rng)
    P = rng.normal(size=(5, 3))
    assert np.allclose(compose(a, b).apply(P), a.apply(b.apply(P)), atol=1e-12)


def test_invalid_depth_and_behind_camera():
    with pytest.raises(InvalidDepthError):
        unproject((10, 10), 0.0, CAM)
    with pytest.raises(InvalidDepthError):
        unproject((10, 10), float("nan"), CAM)
    with pytest.raises(BehindCameraError):
        project([0.0, 0.0, -1.0], CAM)


def test_dense_projection_marks_points_behind():
    P = np.array([[0.0, 0.0, 2.0], [1.0, 1.0, -1.0]])
    u, v, z = project_points(P, CAM)
    assert np.isfinite(u[0]) and np.isnan(u[1]) and np.isnan(v[1])


def test_dense_unproject_matches_pointwise():
    rng = np.random.default_rng(0)
    D = rng.uniform(1, 50, size=CAM.shape)
    P = unproject_depth(D, CAM)
    for v, u in [(0, 0), (191, 319), (77, 140)]:
        assert np.allclose(P[v, u], unproject((u, v), D[v, u], CAM), rtol=1e-15)


def test_camera_validation():
    with pytest.raises(ValueError):
        CameraModel(-1.0, 1.0, 0.0, 0.0, 10, 10)
    with pytest.raises(ValueError):
        CameraModel(1.0, 1.0, 20.0, 0.0, 10, 10)
    cam = CameraModel.from_fov(640, 384, 100.0)
    assert np.isclose(2 * np.degrees(np.arctan(320 / cam.fx)), 100.0)


def test_matrix_roundtrip_and_validity():
    rng = np.random.default_rng(3)
    T = random_transform(rng)
    assert SE3Transform.from_matrix(T.as_matrix().ravel()).allclose(T, atol=0)
    assert T.is_valid()
    bad = SE3Transform(np.diag([1.0, 1.0, -1.0]))
    assert not bad.is_valid()


def test_orthonormalize_projects_to_rotation():
    rng = np.random.default_rng(5)
    R = axis_angle([1, 2, 3], 0.7) + 1e-4 * rng.normal(size=(3, 3))
    Q = orthonormalize(R)
    assert np.allclose(Q.T @ Q, np.eye(3), atol=1e-12)
    assert np.isclose(np.linalg.det(Q), 1.0)


def test_rotation_metrics():
    a = SE3Transform(axis_angle([0, 0, 1], 0.3))
    assert np.isclose(rotation_angle(a.rotation), 0.3)
    assert rotation_error_frobenius(a, a) < 1e-12
    assert rotation_error_frobenius(a, SE3Transform()) > 0


def test_cabs_is_complex_step_friendly():
    h = 1e-30
    x = np.array([-2.0, 3.0]) + 1j * h
    assert np.allclose(np.imag(cabs(x)) / h, [-1.0, 1.0])
    assert np.allclose(cabs(np.array([-2.0, 3.0])), [2.0, 3.0])


@settings(max_examples=25)
@given(seeds)
def test_transforms_are_immutable(seed):
    T = random_transform(np.random.default_rng(seed))
    with pytest.raises(ValueError):
        T.rotation[0, 0] = 2.0
