"""Point-to-point ICP for the cross-vehicle LiDAR transform, plus cloud projection."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateGeometryError, EmptyOverlapError, FormatError
from .geometry import CameraModel, SE3Transform, compose, orthonormalize


@dataclass(eq=False)
class PointCloud:
    points: np.ndarray
    intensities: np.ndarray | None = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)

    def __len__(self):
        return len(self.points)

    def transformed(self, T: SE3Transform) -> PointCloud:
        return PointCloud(T.apply(self.points), self.intensities)


@dataclass
class IcpConfig:
    max_iterations: int = 50
    convergence_eps: float = 1e-5
    max_correspondence_dist: float = 1.0
    initial_guess: SE3Transform = field(default_factory=SE3Transform)

    def __post_init__(self):
        if self.max_iterations <= 0 or self.convergence_eps <= 0 or self.max_correspondence_dist <= 0:
            raise ValueError("ICP parameters must be positive")


@dataclass(eq=False)
class IcpResult:
    transform: SE3Transform
    rms_residual: float      # RMS over gated correspondences at the final pose
    iterations: int
    history: list = field(default_factory=list)  # truncated-RMS objective per iteration
    inlier_fraction: float = 0.0


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("ARTICUGEO_THREADS", "1")))
    except ValueError:
        return 1


def rigid_align(src, dst) -> SE3Transform:
    """Least-squares ``T`` with ``T(src) ~ dst`` (Kabsch, reflection-guarded)."""
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    if len(src) < 3:
        raise DegenerateGeometryError("need at least 3 correspondences")
    cs, cd = src.mean(axis=0), dst.mean(axis=0)
    H = (src - cs).T @ (dst - cd)
    sv = np.linalg.svd(H, compute_uv=False)
    if sv[0] <= 0 or sv[1] <= 1e-12 * sv[0]:
        raise DegenerateGeometryError(f"cross-covariance rank < 2 (singular values {sv})")
    U, _, Vt = np.linalg.svd(H)
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(Vt.T @ U.T))])
    R = Vt.T @ D @ U.T
    return SE3Transform(R, cd - R @ cs)


def icp_register(source: PointCloud, target: PointCloud, cfg: IcpConfig = IcpConfig()) -> IcpResult:
    """Register ``source`` onto ``target``; returns the source->target transform.

    The monitored objective is the RMS of distances truncated at the gate,
    taken over all source points, which cannot increase between iterations.
    """
    if len(source) < 3 or len(target) < 3:
        raise EmptyOverlapError("clouds need at least 3 points each")
    tree = cKDTree(target.points)
    gate = cfg.max_correspondence_dist
    T = cfg.initial_guess
    history = []
    workers = _workers()

    def match(T):
        moved = T.apply(source.points)
        d, idx = tree.query(moved, k=1, distance_upper_bound=gate, workers=workers)
        inl = np.isfinite(d)
        trunc = np.sqrt(np.mean(np.minimum(np.where(inl, d, gate), gate) ** 2))
        return moved, d, idx, inl, trunc

    moved, d, idx, inl, obj = match(T)
    history.append(float(obj))
    it = 0
    for it in range(1, cfg.max_iterations + 1):
        if inl.sum() < 3:
            raise EmptyOverlapError(f"only {int(inl.sum())} correspondences within {gate} m")
        step = rigid_align(moved[inl], target.points[idx[inl]])
        T = compose(step, T)
        T = SE3Transform(orthonormalize(T.rotation), T.translation)
        moved, d, idx, inl, obj = match(T)
        history.append(float(obj))
        if abs(history[-2] - history[-1]) < cfg.convergence_eps:
            break
    if inl.sum() == 0:
        raise EmptyOverlapError(f"no correspondences within {gate} m")
    rms = float(np.sqrt(np.mean(d[inl] ** 2)))
    return IcpResult(T, rms, it, history, float(inl.mean()))


DEFAULT_GATES = (1.0, 0.3, 0.1, 0.05, 0.03)


def icp_coarse_to_fine(source: PointCloud, target: PointCloud, initial_guess: SE3Transform = SE3Transform(),
                       gates=DEFAULT_GATES, max_iterations: int = 100,
                       convergence_eps: float = 1e-5) -> list[IcpResult]:
    """Plain :func:`icp_register` runs with a shrinking correspondence gate.

    Each stage starts from the previous result.  A wide gate gives a large
    basin; narrow gates stop far-off pairs (sparse scan rings, points beyond
    the other cloud's support) from biasing the fit.  Each stage keeps its
    own non-increasing history.  Returns one result per stage.
    """
    if not gates:
        raise ValueError("need at least one gate")
    out = []
    T = initial_guess
    for g in gates:
        res = icp_register(source, target, IcpConfig(max_iterations, convergence_eps, float(g), T))
        out.append(res)
        T = res.transform
    return out


def project_cloud_to_image(cloud: PointCloud, T_cloud_to_cam: SE3Transform, cam: CameraModel) -> np.ndarray:
    """Sparse z-buffered depth raster (nearest point per pixel cell, 0 elsewhere)."""
    P = T_cloud_to_cam.apply(cloud.points)
    z = P[:, 2]
    front = z > 0
    P, z = P[front], z[front]
    u = np.rint(cam.fx * P[:, 0] / z + cam.cx).astype(np.int64)
    v = np.rint(cam.fy * P[:, 1] / z + cam.cy).astype(np.int64)
    inside = (u >= 0) & (u < cam.width) & (v >= 0) & (v < cam.height)
    u, v, z = u[inside], v[inside], z[inside]
    depth = np.full(cam.shape, np.inf)
    np.minimum.at(depth, (v, u), z)
    depth[~np.isfinite(depth)] = 0.0
    return depth


# --- ASCII PLY subset -----------------------------------------------------------

def write_ply(path, cloud: PointCloud) -> None:
    lines = ["ply", "format ascii 1.0", f"element vertex {len(cloud)}",
             "property float x", "property float y", "property float z", "end_header"]
    lines += [f"{x:.9g} {y:.9g} {z:.9g}" for x, y, z in cloud.points]
    Path(path).write_text("\n".join(lines) + "\n")


def read_ply(path) -> PointCloud:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise FileNotFoundError(f"cannot read point cloud {path}: {exc.strerror}") from exc
    lines = text.splitlines()
    if not lines or lines[0].strip() != "ply":
        raise FormatError(f"{path}:1: missing 'ply' header")
    n = None
    body_start = None
    for k, line in enumerate(lines[1:], 2):
        s = line.strip()
        if s.startswith("format") and s != "format ascii 1.0":
            raise FormatError(f"{path}:{k}: only 'format ascii 1.0' is supported")
        if s.startswith("element vertex"):
            try:
                n = int(s.split()[2])
            except (IndexError, ValueError):
                raise FormatError(f"{path}:{k}: bad vertex count") from None
        if s == "end_header":
            body_start = k
            break
    if n is None or body_start is None:
        raise FormatError(f"{path}: incomplete header")
    rows = [ln for ln in lines[body_start:body_start + n]]
    if len(rows) < n:
        raise FormatError(f"{path}: expected {n} vertices, found {len(rows)}")
    pts = np.zeros((n, 3))
    for k, row in enumerate(rows):
        parts = row.split()
        try:
            pts[k] = [float(x) for x in parts[:3]]
        except ValueError:
            raise FormatError(f"{path}:{body_start + k + 1}: bad vertex {row!r}") from None
        if len(parts) < 3:
            raise FormatError(f"{path}:{body_start + k + 1}: vertex needs x y z")
    return PointCloud(pts)
