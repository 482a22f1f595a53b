import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from articugeo import synth
from articugeo.errors import FormatError, UnknownVehicleError
from articugeo.geometry import SE3Transform, axis_angle, compose, inverse, random_transform
from articugeo.pose import (JointMotionEstimate, VpcWeights, cross_vehicle_pose_error, distribute_pose,
                            loss_vpc, motion_between, read_motions, write_motions)
from articugeo.rig import camera_pose_from_joint

seeds = st.integers(0, 2**32 - 1)


def consistent_motions(rng):
    """Front motion, hinge at t and tau, and the rear motion that closes the loop."""
    Tf, Ct, Ctau = random_transform(rng), random_transform(rng), random_transform(rng)
    Tr = compose(inverse(Ctau), compose(Tf, Ct))
    return Tf, Tr, Ct, Ctau


@given(seeds)
def test_loop_closure_gives_identity(seed):
    Tf, Tr, Ct, Ctau = consistent_motions(np.random.default_rng(seed))
    Te = cross_vehicle_pose_error(Tf, Tr, Ct, Ctau)
    assert Te.allclose(SE3Transform(), atol=1e-9)
    assert loss_vpc(Te) < 1e-8


@settings(max_examples=30)
@given(seeds)
def test_vpc_grows_with_perturbation(seed):
    rng = np.random.default_rng(seed)
    Tf, Tr, Ct, Ctau = consistent_motions(rng)
    axis = rng.normal(size=3)
    values = []
    for eps in (0.0, 0.01, 0.05, 0.2):
        bad = compose(SE3Transform(axis_angle(axis, eps), eps * np.array([1.0, 0.0, 0.0])), Tr)
        values.append(loss_vpc(cross_vehicle_pose_error(Tf, bad, Ct, Ctau)))
    assert values[0] < 1e-8
    assert all(a < b for a, b in zip(values, values[1:]))


def test_vpc_weights():
    Te = SE3Transform(axis_angle([0, 0, 1], 0.1), [0.3, 0.0, 0.4])
    rot = np.linalg.norm(Te.rotation - np.eye(3))
    assert np.isclose(loss_vpc(Te, VpcWeights(1.0, 0.0)), rot)
    assert np.isclose(loss_vpc(Te, VpcWeights(0.0, 2.0)), 1.0)
    with pytest.raises(ValueError):
        VpcWeights(-1.0, 1.0)


def test_ground_truth_trajectory_closes(rig):
    traj = synth.make_trajectory(4)
    for t, tau in [(1, 0), (1, 2), (0, 3)]:
        Tf, Tr, Ct, Ctau = synth.articulated_motion(traj, t, tau)
        Te = cross_vehicle_pose_error(Tf, Tr, Ct, Ctau)
        assert loss_vpc(Te) < 1e-9


def test_distribute_pose_uses_vehicle_cameras(rig):
    T = random_transform(np.random.default_rng(0))
    out = distribute_pose(JointMotionEstimate("rear", T, {"C5": 0.5}), rig)
    assert set(out) == {c for c in rig.camera_ids if rig.vehicle_of[c] == "rear"}
    for c, X in out.items():
        assert X.allclose(camera_pose_from_joint(rig.cameras[c], T), atol=0)
    with pytest.raises(UnknownVehicleError):
        JointMotionEstimate("middle", T)
    with pytest.raises(ValueError):
        JointMotionEstimate("front", T, {"C1": float("nan")})


def test_motion_file_roundtrip_and_chaining(tmp_path):
    rng = np.random.default_rng(7)
    motions = {(k, v): random_transform(rng) for k in range(3) for v in ("front", "rear")}
    path = tmp_path / "motions.txt"
    write_motions(path, motions)
    back = read_motions(path)
    assert set(back) == set(motions)
    for key in motions:
        assert back[key].allclose(motions[key], atol=0)
    fwd = motion_between(back, "front", 0, 3)
    assert fwd.allclose(compose(motions[(2, "front")], compose(motions[(1, "front")], motions[(0, "front")])),
                        atol=1e-12)
    assert compose(motion_between(back, "front", 3, 0), fwd).allclose(SE3Transform(), atol=1e-9)
    assert motion_between(back, "rear", 1, 1).allclose(SE3Transform(), atol=0)


def test_motion_file_errors(tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("# header\n0 front 1 2 3\n")
    with pytest.raises(FormatError, match="bad.txt:2"):
        read_motions(bad)
    bad.write_text("0 middle " + " ".join(["0"] * 16) + "\n")
    with pytest.raises(FormatError, match="vehicle"):
        read_motions(bad)
    with pytest.raises(FileNotFoundError, match="missing.txt"):
        read_motions(tmp_path / "missing.txt")
