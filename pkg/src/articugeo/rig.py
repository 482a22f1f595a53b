"""Articulated two-vehicle rig, warping contexts and context transforms.

Extrinsics ``E`` stored on :class:`~articugeo.geometry.CameraModel` map
camera coordinates into the camera's own vehicle LiDAR frame.  Joint motions
``T_L^{t tau}`` map LiDAR coordinates at the target time ``t`` into LiDAR
coordinates at the source time ``tau``; the cross-vehicle transform maps
rear-LiDAR coordinates into front-LiDAR coordinates.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .errors import FormatError, IncompleteStateError
from .geometry import CameraModel, SE3Transform, compose, inverse

CAMERA_IDS = tuple(f"C{k}" for k in range(10))
FRONT_CAMERAS = frozenset(f"C{k}" for k in range(5, 10))
REAR_CAMERAS = frozenset(f"C{k}" for k in range(0, 5))

# Cross-vehicle spatial pairs by number of intermediate views.
CV_PAIRS = {
    0: (("C8", "C2"), ("C7", "C3")),
    1: (("C9", "C2"), ("C6", "C3"), ("C8", "C1"), ("C7", "C4")),
    2: (("C5", "C2"), ("C5", "C3"), ("C9", "C1"), ("C6", "C4"), ("C8", "C0"), ("C7", "C0")),
}

# Perimeter order of each vehicle; neighbours in the ring form WV spatial pairs.
FRONT_RING = ("C5", "C6", "C7", "C8", "C9")
REAR_RING = ("C0", "C1", "C2", "C3", "C4")


def cv_pairs(cv_type: int) -> list[tuple[str, str]]:
    if cv_type not in CV_PAIRS:
        raise ValueError(f"cross-vehicle context type must be 0, 1 or 2, got {cv_type!r}")
    return list(CV_PAIRS[cv_type])


def ring_pairs(ring) -> list[tuple[str, str]]:
    return [(ring[k], ring[(k + 1) % len(ring)]) for k in range(len(ring))]


class ContextKind(enum.Enum):
    TEMPORAL = "T"
    WV_SPATIAL = "WV-S"
    CV_SPATIAL = "CV-S"
    WV_SPATIOTEMPORAL = "WV-ST"
    CV_SPATIOTEMPORAL = "CV-ST"

    @property
    def spatial(self) -> bool:
        return self in (ContextKind.WV_SPATIAL, ContextKind.CV_SPATIAL)

    @property
    def temporal(self) -> bool:
        return self in (ContextKind.TEMPORAL, ContextKind.WV_SPATIOTEMPORAL, ContextKind.CV_SPATIOTEMPORAL)

    @property
    def cross_vehicle(self) -> bool:
        return self in (ContextKind.CV_SPATIAL, ContextKind.CV_SPATIOTEMPORAL)


@dataclass(frozen=True)
class ContextSpec:
    """One warping context.  ``source_time`` is an offset from the target time."""

    kind: ContextKind
    target_cam: str
    source_cam: str
    source_time: int = 0
    cv_type: int | None = None

    def __post_init__(self):
        k = self.kind
        if k is ContextKind.TEMPORAL:
            if self.target_cam != self.source_cam:
                raise ValueError("temporal context must use the same camera")
            if self.source_time == 0:
                raise ValueError("temporal context needs a source time other than t")
        elif k.spatial:
            if self.source_time != 0:
                raise ValueError("spatial context must use the target time")
        elif self.source_time == 0:
            raise ValueError("spatial-temporal context needs a source time other than t")
        if k in (ContextKind.WV_SPATIAL, ContextKind.WV_SPATIOTEMPORAL, ContextKind.CV_SPATIAL,
                 ContextKind.CV_SPATIOTEMPORAL) and self.target_cam == self.source_cam:
            raise ValueError("spatial contexts need two distinct cameras")
        if k.cross_vehicle and self.cv_type not in (0, 1, 2, None):
            raise ValueError("cv_type must be 0, 1 or 2")


@dataclass(frozen=True, eq=False)
class RigState:
    """Rig at one timestamp.

    ``joint_motion_front``/``joint_motion_rear`` hold the motion from the
    target time into *this* state's time; they are only consulted when the
    state is used as the source-time state of a temporal context.
    """

    timestamp: int
    cross_vehicle: SE3Transform | None = None
    joint_motion_front: SE3Transform | None = None
    joint_motion_rear: SE3Transform | None = None

    def joint_motion(self, vehicle: str) -> SE3Transform | None:
        return self.joint_motion_front if vehicle == "front" else self.joint_motion_rear


@dataclass(frozen=True, eq=False)
class RigConfig:
    cameras: dict[str, CameraModel]
    vehicle_of: dict[str, str]
    camera_heights_gt: dict[str, float]
    cross_vehicle_pairs: dict[int, tuple[tuple[str, str], ...]] = field(
        default_factory=lambda: dict(CV_PAIRS))
    front_ring: tuple[str, ...] = FRONT_RING
    rear_ring: tuple[str, ...] = REAR_RING

    def __post_init__(self):
        if len(self.cameras) != 10:
            raise ValueError(f"rig needs exactly 10 cameras, got {len(self.cameras)}")
        if set(self.vehicle_of) != set(self.cameras):
            raise ValueError("every camera needs a vehicle assignment")
        bad = {v for v in self.vehicle_of.values()} - {"front", "rear"}
        if bad:
            raise ValueError(f"unknown vehicle(s) {sorted(bad)}")
        for t, pairs in self.cross_vehicle_pairs.items():
            for a, b in pairs:
                if self.vehicle_of[a] == self.vehicle_of[b]:
                    raise ValueError(f"type-{t} pair ({a}, {b}) does not cross vehicles")

    @property
    def camera_ids(self) -> list[str]:
        return sorted(self.cameras, key=lambda c: int(c[1:]) if c[1:].isdigit() else c)

    @property
    def front_cameras(self) -> frozenset:
        return frozenset(c for c, v in self.vehicle_of.items() if v == "front")

    @property
    def rear_cameras(self) -> frozenset:
        return frozenset(c for c, v in self.vehicle_of.items() if v == "rear")

    def wv_sources(self, cam: str) -> list[str]:
        ring = self.front_ring if self.vehicle_of[cam] == "front" else self.rear_ring
        k = ring.index(cam)
        out = [ring[(k + 1) % len(ring)], ring[(k - 1) % len(ring)]]
        return list(dict.fromkeys(out))

    def cv_sources(self, cam: str, cv_types=(0, 1, 2)) -> list[tuple[str, int]]:
        out = []
        for t in cv_types:
            for a, b in self.cross_vehicle_pairs.get(t, ()):
                if a == cam:
                    out.append((b, t))
                elif b == cam:
                    out.append((a, t))
        return out

    def spatial_contexts(self, cam: str, cv_types=(0, 1, 2)) -> list[ContextSpec]:
        ctxs = [ContextSpec(ContextKind.WV_SPATIAL, cam, src) for src in self.wv_sources(cam)]
        ctxs += [ContextSpec(ContextKind.CV_SPATIAL, cam, src, 0, t) for src, t in self.cv_sources(cam, cv_types)]
        return ctxs


def check_pair_overlap(rig: RigConfig, hfov_margin_deg: float = 0.0) -> list[tuple[str, str]]:
    """Warn about cross-vehicle pairs whose optical axes diverge past the FoV.

    Only a sanity check; the pair table is data and is never rewritten.
    """
    suspicious = []
    for t, pairs in rig.cross_vehicle_pairs.items():
        for a, b in pairs:
            ca, cb = rig.cameras[a], rig.cameras[b]
            za = ca.extrinsic_to_lidar.rotation[:, 2]
            zb = cb.extrinsic_to_lidar.rotation[:, 2]
            angle = np.degrees(np.arccos(np.clip(za @ zb, -1.0, 1.0)))
            fov = np.degrees(2 * np.arctan(ca.width / 2 / ca.fx))
            if angle > fov + hfov_margin_deg:
                warnings.warn(f"type-{t} pair ({a}, {b}): optical axes {angle:.0f} deg apart, "
                              f"likely no overlap", stacklevel=2)
                suspicious.append((a, b))
    return suspicious


def camera_pose_from_joint(cam: CameraModel, joint: SE3Transform) -> SE3Transform:
    """Camera motion ``E^{-1} T_L E`` induced by a vehicle joint motion."""
    E = cam.extrinsic_to_lidar
    return compose(inverse(E), compose(joint, E))


def cross_vehicle_lidar_transform(rig: RigConfig, cam_i: str, cam_j: str, state: RigState) -> SE3Transform:
    """LiDAR frame of ``cam_i`` -> LiDAR frame of ``cam_j``."""
    vi, vj = rig.vehicle_of[cam_i], rig.vehicle_of[cam_j]
    if vi == vj:
        return SE3Transform()
    if state.cross_vehicle is None:
        raise IncompleteStateError(f"state {state.timestamp} has no cross-vehicle transform")
    return state.cross_vehicle if vi == "rear" else inverse(state.cross_vehicle)


def _camera_motion(rig: RigConfig, cam: str, state_tau: RigState) -> SE3Transform:
    vehicle = rig.vehicle_of[cam]
    joint = state_tau.joint_motion(vehicle)
    if joint is None:
        raise IncompleteStateError(f"state {state_tau.timestamp} lacks the {vehicle} joint motion")
    return camera_pose_from_joint(rig.cameras[cam], joint)


def context_transform(ctx: ContextSpec, rig: RigConfig, state_t: RigState,
                      state_tau: RigState | None = None) -> SE3Transform:
    """Target-camera (time t) -> source-camera (time tau) point transform."""
    i, j = ctx.target_cam, ctx.source_cam
    kind = ctx.kind
    same_vehicle = rig.vehicle_of[i] == rig.vehicle_of[j]
    if kind in (ContextKind.WV_SPATIAL, ContextKind.WV_SPATIOTEMPORAL) and not same_vehicle:
        raise ValueError(f"within-vehicle context across vehicles: {i}, {j}")
    if kind.cross_vehicle and same_vehicle:
        raise ValueError(f"cross-vehicle context on one vehicle: {i}, {j}")
    if kind.temporal and state_tau is None:
        raise IncompleteStateError("temporal contexts need the source-time state")

    if kind is ContextKind.TEMPORAL:
        return _camera_motion(rig, i, state_tau)

    E_i = rig.cameras[i].extrinsic_to_lidar
    E_j = rig.cameras[j].extrinsic_to_lidar
    if kind.cross_vehicle:
        T_LiLj = cross_vehicle_lidar_transform(rig, i, j, state_t)
        spatial = compose(inverse(E_j), compose(T_LiLj, E_i))
    else:
        spatial = compose(inverse(E_j), E_i)
    if kind.spatial:
        return spatial
    return compose(_camera_motion(rig, j, state_tau), spatial)


# --- rig config file -------------------------------------------------------

def _camera_from_node(name, node, path) -> tuple[CameraModel, str, float]:
    try:
        ext = np.asarray(node["extrinsic_to_lidar"], dtype=float)
        if ext.size != 16:
            raise FormatError(f"{path}: camera {name}: extrinsic_to_lidar needs 16 floats, got {ext.size}")
        cam = CameraModel(float(node["fx"]), float(node["fy"]), float(node["cx"]), float(node["cy"]),
                          int(node["width"]), int(node["height"]), SE3Transform.from_matrix(ext), name)
        vehicle = str(node["vehicle"])
        height = float(node["height_gt"])
    except KeyError as exc:
        raise FormatError(f"{path}: camera {name}: missing key {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"{path}: camera {name}: {exc}") from None
    return cam, vehicle, height


def rig_from_dict(data: dict, path: str = "<rig>") -> RigConfig:
    if not isinstance(data, dict) or "cameras" not in data:
        raise FormatError(f"{path}: expected a top-level 'cameras' mapping")
    cameras, vehicle_of, heights = {}, {}, {}
    for name, node in data["cameras"].items():
        cam, vehicle, h = _camera_from_node(str(name), node, path)
        cameras[str(name)] = cam
        vehicle_of[str(name)] = vehicle
        heights[str(name)] = h
    pairs = dict(CV_PAIRS)
    if data.get("cross_vehicle_pairs"):
        pairs = {int(k): tuple(tuple(p) for p in v) for k, v in data["cross_vehicle_pairs"].items()}
    kw = {}
    if "front_ring" in data:
        kw["front_ring"] = tuple(data["front_ring"])
    if "rear_ring" in data:
        kw["rear_ring"] = tuple(data["rear_ring"])
    try:
        return RigConfig(cameras, vehicle_of, heights, pairs, **kw)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None


def rig_to_dict(rig: RigConfig) -> dict:
    cams = {}
    for name in rig.camera_ids:
        c = rig.cameras[name]
        cams[name] = {
            "fx": float(c.fx), "fy": float(c.fy), "cx": float(c.cx), "cy": float(c.cy),
            "width": int(c.width), "height": int(c.height),
            "extrinsic_to_lidar": [float(x) for x in c.extrinsic_to_lidar.as_matrix().ravel()],
            "vehicle": rig.vehicle_of[name],
            "height_gt": float(rig.camera_heights_gt[name]),
        }
    out = {"cameras": cams, "front_ring": list(rig.front_ring), "rear_ring": list(rig.rear_ring)}
    if rig.cross_vehicle_pairs != CV_PAIRS:
        out["cross_vehicle_pairs"] = {k: [list(p) for p in v] for k, v in rig.cross_vehicle_pairs.items()}
    return out


def load_rig(path) -> RigConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise FileNotFoundError(f"cannot read rig config {path}: {exc.strerror}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise FormatError(f"{path}: {exc}") from None
    return rig_from_dict(data, str(path))


def save_rig(rig: RigConfig, path) -> None:
    Path(path).write_text(yaml.safe_dump(rig_to_dict(rig), sort_keys=False))
