"""Joint-motion bookkeeping and cross-vehicle pose consistency."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, UnknownVehicleError
from .geometry import SE3Transform, compose, inverse
from .rig import RigConfig, camera_pose_from_joint


@dataclass(frozen=True, eq=False)
class JointMotionEstimate:
    """Motion of one vehicle's LiDAR frame from time t to tau.

    ``weights`` mirrors the per-camera aggregation weights of a pose network;
    they are carried as metadata only.
    """

    vehicle: str
    motion: SE3Transform
    weights: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.vehicle not in ("front", "rear"):
            raise UnknownVehicleError(self.vehicle)
        if not all(np.isfinite(w) for w in self.weights.values()):
            raise ValueError("joint-motion weights must be finite")


@dataclass(frozen=True)
class VpcWeights:
    lambda_R: float = 1.0
    lambda_t: float = 1.0

    def __post_init__(self):
        if self.lambda_R < 0 or self.lambda_t < 0:
            raise ValueError("VPC weights must be non-negative")


def cross_vehicle_pose_error(front_motion: SE3Transform, rear_motion: SE3Transform,
                             cross_t: SE3Transform, cross_tau: SE3Transform) -> SE3Transform:
    """``T_e = (T_f cross_t)^{-1} (cross_tau T_r)``; identity when the loop closes."""
    return compose(inverse(compose(front_motion, cross_t)), compose(cross_tau, rear_motion))


def loss_vpc(T_e: SE3Transform, w: VpcWeights = VpcWeights()) -> float:
    rot = np.linalg.norm(T_e.rotation - np.eye(3), ord="fro")
    return float(w.lambda_R * rot + w.lambda_t * np.linalg.norm(T_e.translation))


def distribute_pose(joint: JointMotionEstimate, rig: RigConfig) -> dict[str, SE3Transform]:
    """Per-camera motion ``E^{-1} T_L E`` for every camera on the joint's vehicle."""
    cams = [c for c in rig.camera_ids if rig.vehicle_of[c] == joint.vehicle]
    if not cams:
        raise UnknownVehicleError(f"rig has no cameras on vehicle {joint.vehicle!r}")
    return {c: camera_pose_from_joint(rig.cameras[c], joint.motion) for c in cams}


# --- motion file: `frame_index vehicle m00 m01 ... m33` -----------------------
# Each line holds the motion of `vehicle` from frame_index to frame_index + 1.

def write_motions(path, motions: dict[tuple[int, str], SE3Transform]) -> None:
    lines = []
    for (frame, vehicle), T in sorted(motions.items()):
        vals = " ".join(f"{x:.17g}" for x in T.as_matrix().ravel())
        lines.append(f"{frame} {vehicle} {vals}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_motions(path) -> dict[tuple[int, str], SE3Transform]:
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise FileNotFoundError(f"cannot read motion file {path}: {exc.strerror}") from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 18:
            raise FormatError(f"{path}:{lineno}: expected 18 fields, got {len(parts)}")
        try:
            frame = int(parts[0])
            vals = np.array([float(x) for x in parts[2:]])
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from None
        if parts[1] not in ("front", "rear"):
            raise FormatError(f"{path}:{lineno}: unknown vehicle {parts[1]!r}")
        out[(frame, parts[1])] = SE3Transform.from_matrix(vals)
    return out


def motion_between(motions: dict[tuple[int, str], SE3Transform], vehicle: str, t: int, tau: int) -> SE3Transform:
    """Chain per-frame steps into the motion from ``t`` to ``tau``."""
    T = SE3Transform()
    if tau >= t:
        for k in range(t, tau):
            T = compose(motions[(k, vehicle)], T)
    else:
        for k in range(t - 1, tau - 1, -1):
            T = compose(inverse(motions[(k, vehicle)]), T)
    return T
