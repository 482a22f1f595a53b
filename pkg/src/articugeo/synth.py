"""Deterministic synthetic world: scenes, articulated trajectories and renders.

World frame is z-up with the ground at ``z = 0`` by default.  Vehicle LiDAR
frames are x-forward, y-left, z-up.  Everything here is exact ray casting of
analytic primitives, so depth, normals and ground labels are ground truth to
floating-point precision.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .errors import FormatError
from .geometry import CameraModel, SE3Transform, axis_angle, compose, inverse, rot_x, rot_z
from .icp import PointCloud
from .rasters import NormalMap
from .rig import CAMERA_IDS, RigConfig

T_EPS = 1e-9


# --- textures -----------------------------------------------------------------

@dataclass
class Texture:
    """``offset + sum_k amp_k sin(2 pi f_k . X + phase_k)`` on world points.

    Channel ``c`` of a 3-channel render shifts every phase by ``c * channel_shift``.
    """

    offset: float = 0.5
    gratings: list = field(default_factory=list)  # (fx, fy, fz, amp, phase), f in cycles/m
    channel_shift: float = 2.1

    def __call__(self, X, channels: int = 1) -> np.ndarray:
        out = np.full(X.shape[:-1] + (channels,), self.offset)
        for fx, fy, fz, amp, phase in self.gratings:
            arg = 2 * np.pi * (X @ np.array([fx, fy, fz])) + phase
            for c in range(channels):
                out[..., c] += amp * np.sin(arg + c * self.channel_shift)
        return np.clip(out, 0.0, 1.0)


def _grating(wavelength, angle_deg, amp, phase, vertical=0.0):
    a = np.deg2rad(angle_deg)
    return (np.cos(a) / wavelength, np.sin(a) / wavelength, vertical, amp, phase)


# --- primitives -----------------------------------------------------------------
# intersect(o, d) -> (t, normal); t = inf on miss.  d need not be unit length.

@dataclass
class GroundPlane:
    """Horizontal plane, optionally clipped to ``extent = (xmin, xmax, ymin, ymax)``."""

    height: float = 0.0
    texture: Texture = field(default_factory=Texture)
    extent: tuple | None = None
    is_ground = True

    def intersect(self, o, d):
        dz = d[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (self.height - o[2]) / dz
        t = np.where((dz < 0) & (t > T_EPS), t, np.inf) if o[2] > self.height else \
            np.where((dz > 0) & (t > T_EPS), t, np.inf)
        if self.extent is not None:
            x0, x1, y0, y1 = self.extent
            X = o + np.where(np.isfinite(t), t, 0.0)[:, None] * d
            inside = (X[:, 0] >= x0) & (X[:, 0] <= x1) & (X[:, 1] >= y0) & (X[:, 1] <= y1)
            t = np.where(inside, t, np.inf)
        n = np.broadcast_to(np.array([0.0, 0.0, 1.0]), d.shape)
        return t, n


@dataclass
class Wall:
    """Vertical rectangle over the segment ``p0 -> p1`` between heights z0 and z1."""

    p0: tuple
    p1: tuple
    z0: float = 0.0
    z1: float = 40.0
    texture: Texture = field(default_factory=Texture)
    is_ground = False

    def intersect(self, o, d):
        a = np.array([self.p0[0], self.p0[1], 0.0])
        b = np.array([self.p1[0], self.p1[1], 0.0])
        seg = b - a
        n = np.array([-seg[1], seg[0], 0.0])
        n /= np.linalg.norm(n)
        denom = d @ n
        with np.errstate(divide="ignore", invalid="ignore"):
            t = ((a - o) @ n) / denom
        X = o + np.where(np.isfinite(t), t, 0.0)[:, None] * d
        along = ((X - a) @ seg) / (seg @ seg)
        ok = (np.abs(denom) > 1e-15) & (t > T_EPS) & (along >= 0) & (along <= 1) \
            & (X[:, 2] >= self.z0) & (X[:, 2] <= self.z1)
        return np.where(ok, t, np.inf), np.broadcast_to(n, d.shape)


@dataclass
class Box:
    lo: tuple
    hi: tuple
    texture: Texture = field(default_factory=Texture)
    is_ground = False

    def intersect(self, o, d):
        lo, hi = np.asarray(self.lo, float), np.asarray(self.hi, float)
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / d
            t1 = (lo - o) * inv
            t2 = (hi - o) * inv
        tmin = np.where(np.isnan(t1), -np.inf, np.minimum(t1, t2))
        tmax = np.where(np.isnan(t1), np.inf, np.maximum(t1, t2))
        t_enter = tmin.max(axis=1)
        t_exit = tmax.min(axis=1)
        axis = tmin.argmax(axis=1)
        ok = (t_enter <= t_exit) & (t_enter > T_EPS)
        n = np.zeros(d.shape)
        n[np.arange(len(d)), axis] = 1.0
        return np.where(ok, t_enter, np.inf), n


@dataclass
class Sphere:
    center: tuple
    radius: float
    texture: Texture = field(default_factory=Texture)
    is_ground = False

    def intersect(self, o, d):
        c = np.asarray(self.center, float)
        oc = o - c
        A = np.sum(d * d, axis=1)
        B = 2 * d @ oc
        C = oc @ oc - self.radius ** 2
        disc = B * B - 4 * A * C
        sq = np.sqrt(np.maximum(disc, 0.0))
        t0 = (-B - sq) / (2 * A)
        t1 = (-B + sq) / (2 * A)
        t = np.where(t0 > T_EPS, t0, np.where(t1 > T_EPS, t1, np.inf))
        t = np.where(disc >= 0, t, np.inf)
        X = o + np.where(np.isfinite(t), t, 0.0)[:, None] * d
        n = (X - c) / self.radius
        return t, n


def _aabb(p):
    if isinstance(p, Box):
        return np.asarray(p.lo, float), np.asarray(p.hi, float)
    if isinstance(p, Sphere):
        c = np.asarray(p.center, float)
        return c - p.radius, c + p.radius
    return None


def _anchor(p):
    if isinstance(p, GroundPlane):
        if p.extent is None:
            return None
        x0, x1, y0, y1 = p.extent
        return np.array([(x0 + x1) / 2, (y0 + y1) / 2])
    if isinstance(p, Wall):
        return (np.asarray(p.p0, float) + np.asarray(p.p1, float)) / 2
    if isinstance(p, Box):
        return (np.asarray(p.lo, float)[:2] + np.asarray(p.hi, float)[:2]) / 2
    if isinstance(p, Sphere):
        return np.asarray(p.center, float)[:2]
    return None


@dataclass
class Scene:
    """Primitives plus optional group labels (one per primitive, default: own index).

    Groups tie together primitives that belong to one physical object, so
    fixtures can drop whole objects instead of slicing through surfaces.
    """

    primitives: list
    groups: list | None = None

    def __post_init__(self):
        if self.groups is None:
            self.groups = list(range(len(self.primitives)))
        if len(self.groups) != len(self.primitives):
            raise ValueError("need one group label per primitive")
        solids = [(k, _aabb(p)) for k, p in enumerate(self.primitives) if _aabb(p) is not None]
        for a in range(len(solids)):
            for b in range(a + 1, len(solids)):
                (ka, (la, ha)), (kb, (lb, hb)) = solids[a], solids[b]
                if np.all(la < hb) and np.all(lb < ha):
                    raise ValueError(f"primitives {ka} and {kb} overlap")

    def cast(self, o, d):
        """Closest hit per ray: ``(t, world_normal, primitive_index)``; index -1 on miss."""
        o = np.asarray(o, float)
        d = np.asarray(d, float)
        best_t = np.full(len(d), np.inf)
        best_n = np.zeros(d.shape)
        best_k = np.full(len(d), -1)
        for k, prim in enumerate(self.primitives):
            t, n = prim.intersect(o, d)
            closer = t < best_t
            best_t = np.where(closer, t, best_t)
            best_n = np.where(closer[:, None], n, best_n)
            best_k = np.where(closer, k, best_k)
        return best_t, best_n, best_k

    def group_ids(self, k) -> np.ndarray:
        """Group label per primitive index (``-1`` stays ``-1``)."""
        lut = np.append(np.asarray(self.groups, dtype=int), -1)
        return lut[np.asarray(k)]

    def group_anchors(self) -> dict:
        """World ``(x, y)`` centre of every bounded group; unbounded groups are left out."""
        pts: dict = {}
        unbounded = set()
        for p, g in zip(self.primitives, self.groups):
            c = _anchor(p)
            if c is None:
                unbounded.add(g)
            else:
                pts.setdefault(g, []).append(c)
        return {g: np.mean(v, axis=0) for g, v in pts.items() if g not in unbounded}

    def shade(self, X, k, channels: int = 1) -> np.ndarray:
        out = np.zeros(X.shape[:-1] + (channels,))
        for idx, prim in enumerate(self.primitives):
            sel = k == idx
            if np.any(sel):
                out[sel] = prim.texture(X[sel], channels)
        return out


# --- trajectory -------------------------------------------------------------------

@dataclass
class Trajectory:
    """Front-vehicle planar poses plus a yaw hinge to the rear vehicle.

    ``poses`` holds ``(x, y, yaw)`` of the front LiDAR per frame (radians);
    ``articulation`` holds the hinge angle per frame (radians).
    """

    poses: np.ndarray
    articulation: np.ndarray
    hinge_front: float = 2.5
    hinge_rear: float = 2.5
    lidar_height: float = 1.9

    def __post_init__(self):
        self.poses = np.asarray(self.poses, float).reshape(-1, 3)
        self.articulation = np.asarray(self.articulation, float).reshape(-1)
        if len(self.poses) != len(self.articulation):
            raise ValueError("poses and articulation angles differ in length")
        if np.any(np.abs(self.articulation) > np.pi / 2):
            raise ValueError("articulation angles must stay within +-pi/2")

    def __len__(self):
        return len(self.poses)

    def _check(self, frame):
        if not 0 <= frame < len(self):
            raise IndexError(f"frame {frame} outside trajectory of {len(self)} frames")

    def front_pose(self, frame: int) -> SE3Transform:
        """World <- front LiDAR."""
        self._check(frame)
        x, y, yaw = self.poses[frame]
        return SE3Transform(rot_z(yaw), [x, y, self.lidar_height])

    def hinge(self, frame: int) -> SE3Transform:
        """Rear LiDAR -> front LiDAR (the cross-vehicle transform)."""
        self._check(frame)
        to_hinge = SE3Transform.from_translation([-self.hinge_front, 0.0, 0.0])
        swing = SE3Transform(rot_z(self.articulation[frame]))
        from_hinge = SE3Transform.from_translation([-self.hinge_rear, 0.0, 0.0])
        return compose(to_hinge, compose(swing, from_hinge))

    def rear_pose(self, frame: int) -> SE3Transform:
        return compose(self.front_pose(frame), self.hinge(frame))

    def lidar_pose(self, frame: int, vehicle: str) -> SE3Transform:
        return self.front_pose(frame) if vehicle == "front" else self.rear_pose(frame)


def make_trajectory(frames: int = 10, speed: float = 0.5, yaw_rate_deg: float = 1.0,
                    articulation_amplitude_deg: float = 10.0, articulation_period: float = 20.0,
                    articulation_offset_deg: float = 0.0, start=(0.0, 0.0, 0.0), **kw) -> Trajectory:
    """Constant-speed arc with a sinusoidal articulation swing."""
    x, y, yaw = start[0], start[1], np.deg2rad(start[2])
    poses, angles = [], []
    for k in range(frames):
        poses.append((x, y, yaw))
        angles.append(np.deg2rad(articulation_offset_deg
                                 + articulation_amplitude_deg * np.sin(2 * np.pi * k / articulation_period)))
        x += speed * np.cos(yaw)
        y += speed * np.sin(yaw)
        yaw += np.deg2rad(yaw_rate_deg)
    return Trajectory(np.array(poses), np.array(angles), **kw)


def articulated_motion(traj: Trajectory, t: int, tau: int):
    """``(front motion, rear motion, cross_t, cross_tau)`` between two frames.

    Motions map LiDAR coordinates at ``t`` into LiDAR coordinates at ``tau``.
    """
    Ff_t, Ff_tau = traj.front_pose(t), traj.front_pose(tau)
    Fr_t, Fr_tau = traj.rear_pose(t), traj.rear_pose(tau)
    front = compose(inverse(Ff_tau), Ff_t)
    rear = compose(inverse(Fr_tau), Fr_t)
    return front, rear, traj.hinge(t), traj.hinge(tau)


# --- rig ---------------------------------------------------------------------------

_R_BASE = np.array([[0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]])  # camera axes -> vehicle axes

# name: (vehicle, x, y, dz, yaw_deg); dz relative to the LiDAR
DEFAULT_MOUNTS = {
    "C5": ("front", 2.0, 0.0, -0.30, 0.0),
    "C6": ("front", 1.6, -0.9, -0.35, -60.0),
    "C7": ("front", -1.6, -0.9, -0.40, -130.0),
    "C8": ("front", -1.6, 0.9, -0.40, 130.0),
    "C9": ("front", 1.6, 0.9, -0.35, 60.0),
    "C0": ("rear", -2.0, 0.0, -0.25, 180.0),
    "C1": ("rear", -1.6, 0.9, -0.30, 120.0),
    "C2": ("rear", 1.6, 0.9, -0.45, 50.0),
    "C3": ("rear", 1.6, -0.9, -0.45, -50.0),
    "C4": ("rear", -1.6, -0.9, -0.30, -120.0),
}


def camera_extrinsic(x, y, dz, yaw_deg, pitch_deg=2.0) -> SE3Transform:
    """Camera -> LiDAR for a camera at ``(x, y, dz)`` yawed and pitched down."""
    R = rot_z(np.deg2rad(yaw_deg)) @ _R_BASE @ rot_x(-np.deg2rad(pitch_deg))
    return SE3Transform(R, [x, y, dz])


def default_rig(width: int = 320, height: int = 192, hfov_deg: float = 100.0,
                pitch_deg: float = 2.0, lidar_height: float = 1.9) -> RigConfig:
    cams, vehicle_of, heights = {}, {}, {}
    for name in CAMERA_IDS:
        vehicle, x, y, dz, yaw = DEFAULT_MOUNTS[name]
        E = camera_extrinsic(x, y, dz, yaw, pitch_deg)
        cams[name] = CameraModel.from_fov(width, height, hfov_deg, E, name)
        vehicle_of[name] = vehicle
        heights[name] = lidar_height + dz
    return RigConfig(cams, vehicle_of, heights)


# --- scenes ------------------------------------------------------------------------

def solid_texture(seed: int = 0, wavelengths=(6.0, 9.0, 14.0), amp: float = 0.12) -> Texture:
    """One smooth 3D intensity field; shared by touching primitives so creases stay continuous."""
    rng = np.random.default_rng(seed)
    gr = []
    for wl in wavelengths:
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        f = d / wl
        gr.append((f[0], f[1], f[2], amp, rng.uniform(0, 2 * np.pi)))
    return Texture(0.5, gr)


def room_scene(half_x: float = 24.0, half_y: float = 16.0, wall_height: float = 60.0,
               center=(0.0, 0.0), boxes: bool = False, spheres: bool = False,
               texture_seed: int = 0) -> Scene:
    cx, cy = center
    corners = [(cx - half_x, cy - half_y), (cx + half_x, cy - half_y),
               (cx + half_x, cy + half_y), (cx - half_x, cy + half_y)]
    tex = solid_texture(texture_seed)
    prims = [GroundPlane(0.0, tex)]
    for k in range(4):
        prims.append(Wall(corners[k], corners[(k + 1) % 4], 0.0, wall_height, tex))
    if boxes:
        prims.append(Box((cx + 9.0, cy + 5.0, 0.0), (cx + 12.0, cy + 8.0, 2.5), tex))
        prims.append(Box((cx - 14.0, cy - 9.0, 0.0), (cx - 11.0, cy - 6.5, 3.0), tex))
        prims.append(Box((cx + 4.0, cy - 10.0, 0.0), (cx + 6.5, cy - 8.0, 1.5), tex))
    if spheres:
        prims.append(Sphere((cx + 10.0, cy - 4.0, 2.0), 2.0, tex))
    return Scene(prims)


def island_scene(ground_half=(10.0, 7.0), wall_half=(24.0, 16.0), wall_z=(3.0, 50.0),
                 corner_gap: float = 2.0, center=(0.0, 0.0), texture_seed: int = 0) -> Scene:
    """Finite ground plate and four free-standing wall panels.

    Every pair of planes is separated by empty space, so no pixel footprint
    straddles two surfaces with different normals.
    """
    cx, cy = center
    gx, gy = ground_half
    wx, wy = wall_half
    g = corner_gap
    tex = solid_texture(texture_seed)
    prims = [GroundPlane(0.0, tex, (cx - gx, cx + gx, cy - gy, cy + gy))]
    for p0, p1 in [((-wx + g, -wy), (wx - g, -wy)), ((wx, -wy + g), (wx, wy - g)),
                   ((wx - g, wy), (-wx + g, wy)), ((-wx, wy - g), (-wx, -wy + g))]:
        prims.append(Wall((cx + p0[0], cy + p0[1]), (cx + p1[0], cy + p1[1]), wall_z[0], wall_z[1], tex))
    return Scene(prims)


def yard_scene(half=(22.0, 14.0), tile: float = 3.0, gap: float = 1.2, lane: float = 1.5,
               block=(0.4, 1.0), block_height=(0.8, 3.0), seed: int = 7, texture_seed: int = 0) -> Scene:
    """Grid of separate ground tiles, each with one block, around a clear driving lane.

    Tiles and their blocks share a group.  Gaps between tiles mean that
    dropping a group leaves no cut edge on a continuous surface.
    """
    tex = solid_texture(texture_seed)
    rng = np.random.default_rng(seed)
    prims, groups = [], []
    pitch = tile + gap
    h = tile / 2
    g = 0
    for cx in np.arange(-half[0], half[0] + 1e-9, pitch):
        for cy in np.arange(-half[1], half[1] + 1e-9, pitch):
            prims.append(GroundPlane(0.0, tex, (cx - h, cx + h, cy - h, cy + h)))
            groups.append(g)
            if abs(cy) > lane:
                sx, sy = rng.uniform(block[0], block[1], 2)
                top = rng.uniform(*block_height)
                ox = rng.uniform(-h + sx / 2 + 0.1, h - sx / 2 - 0.1)
                oy = rng.uniform(-h + sy / 2 + 0.1, h - sy / 2 - 0.1)
                prims.append(Box((cx + ox - sx / 2, cy + oy - sy / 2, 0.0),
                                 (cx + ox + sx / 2, cy + oy + sy / 2, top), tex))
                groups.append(g)
            g += 1
    return Scene(prims, groups)


def calibration_scene(texture_seed: int = 0) -> Scene:
    return yard_scene(texture_seed=texture_seed)


def ground_scene() -> Scene:
    return Scene([GroundPlane(0.0, solid_texture())])


# --- rendering ---------------------------------------------------------------------

@dataclass(eq=False)
class CameraRender:
    image: np.ndarray
    depth: np.ndarray
    normals: NormalMap
    ground: np.ndarray


@dataclass(eq=False)
class RenderOutput:
    frame: int
    cameras: dict[str, CameraRender]
    front_pose: SE3Transform
    rear_pose: SE3Transform
    cross_vehicle: SE3Transform
    clouds: dict[str, PointCloud] = field(default_factory=dict)


def camera_world_pose(rig: RigConfig, traj: Trajectory, frame: int, cam: str) -> SE3Transform:
    """World <- camera."""
    return compose(traj.lidar_pose(frame, rig.vehicle_of[cam]), rig.cameras[cam].extrinsic_to_lidar)


def render_camera(scene: Scene, cam: CameraModel, world_from_cam: SE3Transform,
                  channels: int = 1) -> CameraRender:
    rays = cam.rays().reshape(-1, 3)  # z = 1, so the hit parameter is the depth
    R, o = world_from_cam.rotation, world_from_cam.translation
    t, n_w, k = scene.cast(o, rays @ R.T)
    hit = np.isfinite(t)
    depth = np.where(hit, t, 0.0)
    X = o + np.where(hit, t, 0.0)[:, None] * (rays @ R.T)
    img = scene.shade(X, k, channels)
    img[~hit] = 0.0
    n_c = n_w @ R
    P = depth[:, None] * rays
    flip = np.sum(n_c * P, axis=1) > 0
    n_c = np.where(flip[:, None], -n_c, n_c)
    n_c = np.where(hit[:, None], n_c, 0.0)
    is_ground = np.array([getattr(p, "is_ground", False) for p in scene.primitives] + [False])
    ground = is_ground[k] & hit
    h, w = cam.shape
    return CameraRender(img.reshape(h, w, channels), depth.reshape(h, w),
                        NormalMap(n_c.reshape(h, w, 3), hit.reshape(h, w), True), ground.reshape(h, w))


@dataclass(frozen=True)
class LidarPattern:
    n_azimuth: int = 1800
    elevations_deg: tuple = tuple(np.linspace(-30.67, 10.67, 32))

    def directions(self) -> np.ndarray:
        az = np.linspace(-np.pi, np.pi, self.n_azimuth, endpoint=False)
        el = np.deg2rad(np.asarray(self.elevations_deg))
        A, E = np.meshgrid(az, el)
        return np.stack([np.cos(E) * np.cos(A), np.cos(E) * np.sin(A), np.sin(E)], -1).reshape(-1, 3)


def _rng(seed: int, *stream) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed)] + [int(s) for s in stream]))


def sample_lidar(scene: Scene, lidar_pose: SE3Transform, pattern: LidarPattern = LidarPattern(),
                 noise_sigma: float = 0.0, seed: int = 0, stream=(0,), with_groups: bool = False):
    """Ray-cast a spinning LiDAR; points returned in the LiDAR frame, misses dropped.

    With ``with_groups`` the scene group of every point is returned as well.
    """
    dirs = pattern.directions()
    R, o = lidar_pose.rotation, lidar_pose.translation
    t, _, k = scene.cast(o, dirs @ R.T)
    hit = np.isfinite(t)
    r = t[hit]
    if noise_sigma > 0:
        r = r + _rng(seed, *stream).normal(0.0, noise_sigma, size=r.shape)
    cloud = PointCloud(r[:, None] * dirs[hit])
    if with_groups:
        return cloud, scene.group_ids(k[hit])
    return cloud


def render(scene: Scene, rig: RigConfig, traj: Trajectory, frame: int, channels: int = 1,
           lidar: LidarPattern | None = None, lidar_noise: float = 0.0, seed: int = 0) -> RenderOutput:
    cams = {}
    for name in rig.camera_ids:
        cams[name] = render_camera(scene, rig.cameras[name], camera_world_pose(rig, traj, frame, name), channels)
    out = RenderOutput(frame, cams, traj.front_pose(frame), traj.rear_pose(frame), traj.hinge(frame))
    if lidar is not None:
        for k, vehicle in enumerate(("front", "rear")):
            out.clouds[vehicle] = sample_lidar(scene, traj.lidar_pose(frame, vehicle), lidar,
                                               lidar_noise, seed, (frame, k))
    return out


# --- priors ------------------------------------------------------------------------

def perturb_normals(normals: NormalMap, noise_deg: float, rng: np.random.Generator) -> NormalMap:
    """Tilt each valid normal by exactly ``noise_deg`` about a random perpendicular axis."""
    if noise_deg == 0:
        return NormalMap(normals.vectors.copy(), normals.valid.copy(), normals.camera_facing)
    n = normals.vectors
    r = rng.normal(size=n.shape)
    axis = np.cross(n, r)
    axis /= np.maximum(np.linalg.norm(axis, axis=-1, keepdims=True), 1e-300)
    th = np.deg2rad(noise_deg)
    out = n * np.cos(th) + np.cross(axis, n) * np.sin(th)
    out /= np.maximum(np.linalg.norm(out, axis=-1, keepdims=True), 1e-300)
    out = np.where(normals.valid[..., None], out, 0.0)
    return NormalMap(out, normals.valid.copy(), normals.camera_facing)


def prior_provider(render_out: CameraRender, scale: float = 1.0, normal_noise_deg: float = 0.0,
                   seed: int = 0, stream=(0,)) -> tuple[np.ndarray, NormalMap]:
    """Scale-ambiguous pseudo depth and noisy pseudo normals from ground truth."""
    if not scale > 0:
        raise ValueError("prior scale must be positive")
    depth = scale * render_out.depth
    normals = perturb_normals(render_out.normals, normal_noise_deg, _rng(seed, 7, *stream))
    return depth, normals


# --- config files --------------------------------------------------------------------

def _texture_from(node) -> Texture:
    if node is None:
        return Texture()
    return Texture(float(node.get("offset", 0.5)), [tuple(float(x) for x in g) for g in node.get("gratings", [])])


def _texture_to(tex: Texture) -> dict:
    return {"offset": float(tex.offset), "gratings": [[float(x) for x in g] for g in tex.gratings]}


def scene_from_dict(data: dict, path: str = "<scene>") -> Scene:
    prims, groups = [], []
    for k, node in enumerate(data.get("primitives", [])):
        try:
            kind = node["type"]
            groups.append(node.get("group"))
            tex = _texture_from(node.get("texture"))
            if kind == "ground":
                ext = node.get("extent")
                prims.append(GroundPlane(float(node.get("height", 0.0)), tex,
                                         None if ext is None else tuple(float(x) for x in ext)))
            elif kind == "wall":
                prims.append(Wall(tuple(node["p0"]), tuple(node["p1"]), float(node.get("z0", 0.0)),
                                  float(node.get("z1", 40.0)), tex))
            elif kind == "box":
                prims.append(Box(tuple(node["min"]), tuple(node["max"]), tex))
            elif kind == "sphere":
                prims.append(Sphere(tuple(node["center"]), float(node["radius"]), tex))
            else:
                raise FormatError(f"{path}: primitive {k}: unknown type {kind!r}")
        except KeyError as exc:
            raise FormatError(f"{path}: primitive {k}: missing key {exc.args[0]!r}") from None
    if "preset" in data:
        preset = data["preset"]
        base = {"room": lambda: room_scene(), "room_boxes": lambda: room_scene(boxes=True),
                "room_full": lambda: room_scene(boxes=True, spheres=True), "ground": ground_scene,
                "island": island_scene, "yard": yard_scene, "calibration": calibration_scene}
        if preset not in base:
            raise FormatError(f"{path}: unknown scene preset {preset!r}")
        b = base[preset]()
        prims = b.primitives + prims
        groups = list(b.groups) + groups
    # unlabelled primitives get fresh groups of their own
    used = {g for g in groups if g is not None}
    fresh = (max(used) + 1 if used else 0)
    for k, g in enumerate(groups):
        if g is None:
            while fresh in used:
                fresh += 1
            groups[k] = fresh
            used.add(fresh)
        else:
            groups[k] = int(g)
    try:
        return Scene(prims, groups)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None


def scene_to_dict(scene: Scene) -> dict:
    out = []
    for p in scene.primitives:
        if isinstance(p, GroundPlane):
            out.append({"type": "ground", "height": p.height})
            if p.extent is not None:
                out[-1]["extent"] = [float(x) for x in p.extent]
        elif isinstance(p, Wall):
            out.append({"type": "wall", "p0": list(p.p0), "p1": list(p.p1), "z0": p.z0, "z1": p.z1})
        elif isinstance(p, Box):
            out.append({"type": "box", "min": list(p.lo), "max": list(p.hi)})
        elif isinstance(p, Sphere):
            out.append({"type": "sphere", "center": list(p.center), "radius": p.radius})
        out[-1]["texture"] = _texture_to(p.texture)
    for node, g in zip(out, scene.groups):
        node["group"] = int(g)
    return {"primitives": out}


def trajectory_from_dict(data: dict, path: str = "<trajectory>") -> Trajectory:
    kw = {k: float(data[k]) for k in ("hinge_front", "hinge_rear", "lidar_height") if k in data}
    try:
        if "poses" in data:
            poses = np.array([[p[0], p[1], np.deg2rad(p[2])] for p in data["poses"]], float)
            angles = np.deg2rad(np.asarray(data["articulation_deg"], float))
            return Trajectory(poses, angles, **kw)
        return make_trajectory(
            frames=int(data.get("frames", 10)), speed=float(data.get("speed", 0.5)),
            yaw_rate_deg=float(data.get("yaw_rate_deg", 1.0)),
            articulation_amplitude_deg=float(data.get("articulation_amplitude_deg", 10.0)),
            articulation_period=float(data.get("articulation_period", 20.0)),
            articulation_offset_deg=float(data.get("articulation_offset_deg", 0.0)),
            start=tuple(data.get("start", (0.0, 0.0, 0.0))), **kw)
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: {exc}") from None


def trajectory_to_dict(traj: Trajectory) -> dict:
    return {
        "poses": [[float(x), float(y), float(np.rad2deg(a))] for x, y, a in traj.poses],
        "articulation_deg": [float(np.rad2deg(a)) for a in traj.articulation],
        "hinge_front": traj.hinge_front, "hinge_rear": traj.hinge_rear, "lidar_height": traj.lidar_height,
    }


def load_yaml(path, what: str):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise FileNotFoundError(f"cannot read {what} config {path}: {exc.strerror}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise FormatError(f"{path}: {exc}") from None
    if not isinstance(data, dict):
        raise FormatError(f"{path}: expected a mapping at the top level")
    return data


def load_scene(path) -> Scene:
    return scene_from_dict(load_yaml(path, "scene"), str(path))


def load_trajectory(path) -> Trajectory:
    return trajectory_from_dict(load_yaml(path, "trajectory"), str(path))


def random_rotation_about(axis, angle):
    return axis_angle(axis, angle)


# --- calibration fixtures ------------------------------------------------------------

def crop_by_groups(front_groups, rear_groups, anchor_x: dict, overlap: float = 0.6):
    """Drop whole scene groups so each cloud shares about ``overlap`` of its points.

    ``anchor_x`` maps group -> coordinate along the crop axis (front frame).
    The front cloud keeps groups with anchor ``>= a`` and the rear cloud
    keeps anchors ``<= b``; ``(a, b)`` is the pair of anchor values
    whose two overlap fractions lie closest to ``overlap``.  Groups without
    an anchor are kept in both.  Returns the keep masks and the overlaps.
    """
    if not 0.0 < overlap < 1.0:
        raise ValueError("overlap must lie in (0, 1)")
    ax_f = np.array([anchor_x.get(int(g), np.nan) for g in front_groups])
    ax_r = np.array([anchor_x.get(int(g), np.nan) for g in rear_groups])
    free_f, free_r = np.isnan(ax_f), np.isnan(ax_r)
    values = np.unique(list(anchor_x.values()))
    best = None
    for a in values:
        kf = free_f | (ax_f >= a)
        for b in values[values >= a]:
            kr = free_r | (ax_r <= b)
            if not kf.any() or not kr.any():
                continue
            of = np.mean(free_f[kf] | (ax_f[kf] <= b))
            orr = np.mean(free_r[kr] | (ax_r[kr] >= a))
            err = max(abs(of - overlap), abs(orr - overlap))
            if best is None or err < best[0]:
                best = (err, kf, kr, (float(of), float(orr)))
    if best is None:
        raise ValueError("clouds share no bounded scene groups")
    return best[1], best[2], best[3]


def calibration_pair(scene: Scene, traj: Trajectory, frame: int = 0, pattern: LidarPattern = LidarPattern(),
                     noise_sigma: float = 0.01, overlap: float = 0.6, seed: int = 0, axis: int = 0):
    """Front/rear LiDAR clouds cropped to ``overlap`` plus the true rear->front transform.

    Whole scene groups are dropped along ``axis`` of the front frame: the
    front keeps what lies ahead, the rear what lies behind.
    """
    gt = traj.hinge(frame)
    front, gf = sample_lidar(scene, traj.front_pose(frame), pattern, noise_sigma, seed, (frame, 0), True)
    rear, gr = sample_lidar(scene, traj.rear_pose(frame), pattern, noise_sigma, seed, (frame, 1), True)
    to_front = inverse(traj.front_pose(frame))
    anchor_x = {g: float(to_front.apply([c[0], c[1], 0.0])[axis]) for g, c in scene.group_anchors().items()}
    kf, kr, achieved = crop_by_groups(gf, gr, anchor_x, overlap)
    return PointCloud(front.points[kf]), PointCloud(rear.points[kr]), gt, achieved
