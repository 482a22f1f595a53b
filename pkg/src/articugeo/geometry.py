"""Pinhole camera and rigid-body primitives.

Frames: camera coordinates are x-right, y-down, z-forward.  A transform
``T`` maps points expressed in its source frame into its target frame,
``T(P) = R @ P + t``, and ``compose(a, b)`` applies ``b`` first.

Every raster-level routine here accepts complex arrays so that losses built
on top can be differentiated by complex-step (see :mod:`articugeo.gradcheck`).
Comparisons, floors and sign decisions always use the real part.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BehindCameraError, InvalidDepthError

ORTHO_TOL = 1e-9


def real_part(x):
    x = np.asarray(x)
    return x.real if np.iscomplexobj(x) else x


def cabs(x):
    """``|x|`` that stays holomorphic away from zero (complex-step safe)."""
    x = np.asarray(x)
    if np.iscomplexobj(x):
        return x * np.sign(x.real)
    return np.abs(x)


def dot3(a, b):
    """Row-wise dot product over the last axis (complex-safe, no conjugation)."""
    return np.einsum("...i,...i->...", a, b)


def csqrt(x):
    x = np.asarray(x)
    if np.iscomplexobj(x):
        return np.sqrt(x)
    return np.sqrt(np.maximum(x, 0.0))


@dataclass(frozen=True, eq=False)
class SE3Transform:
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.array(self.rotation, dtype=float).reshape(3, 3)
        t = np.array(self.translation, dtype=float).reshape(3)
        R.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> SE3Transform:
        return cls()

    @classmethod
    def from_matrix(cls, M) -> SE3Transform:
        M = np.asarray(M, dtype=float)
        if M.shape == (16,):
            M = M.reshape(4, 4)
        return cls(M[:3, :3], M[:3, 3])

    @classmethod
    def from_translation(cls, t) -> SE3Transform:
        return cls(np.eye(3), t)

    def as_matrix(self) -> np.ndarray:
        M = np.eye(4)
        M[:3, :3] = self.rotation
        M[:3, 3] = self.translation
        return M

    def apply(self, points):
        """Transform ``(..., 3)`` points (real or complex)."""
        points = np.asarray(points)
        return points @ self.rotation.T + self.translation

    def rotate(self, vectors):
        return np.asarray(vectors) @ self.rotation.T

    def __matmul__(self, other: SE3Transform) -> SE3Transform:
        return compose(self, other)

    def is_valid(self, tol: float = ORTHO_TOL) -> bool:
        R = self.rotation
        return (
            np.all(np.isfinite(R))
            and np.all(np.isfinite(self.translation))
            and np.allclose(R.T @ R, np.eye(3), atol=tol)
            and abs(np.linalg.det(R) - 1.0) < tol
        )

    def allclose(self, other: SE3Transform, atol: float = 1e-9) -> bool:
        return np.allclose(self.rotation, other.rotation, atol=atol) and np.allclose(
            self.translation, other.translation, atol=atol
        )

    def __repr__(self):
        return f"SE3Transform(R={self.rotation.tolist()}, t={self.translation.tolist()})"


def compose(a: SE3Transform, b: SE3Transform) -> SE3Transform:
    """``compose(a, b)(P) == a(b(P))``."""
    return SE3Transform(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def inverse(t: SE3Transform) -> SE3Transform:
    Rt = t.rotation.T
    return SE3Transform(Rt, -Rt @ t.translation)


def rotation_error_frobenius(a: SE3Transform, b: SE3Transform) -> float:
    """``||R_a^T R_b - I||_F``; zero iff the rotations agree."""
    return float(np.linalg.norm(a.rotation.T @ b.rotation - np.eye(3), ord="fro"))


def rot_x(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def axis_angle(axis, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix."""
    k = np.asarray(axis, dtype=float)
    k = k / np.linalg.norm(k)
    K = np.array([[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]])
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * K @ K


def rotation_angle(R) -> float:
    """Geodesic angle of a rotation matrix, radians."""
    c = (np.trace(R) - 1.0) / 2.0
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


def random_transform(rng: np.random.Generator, max_angle: float = np.pi, max_trans: float = 1.0) -> SE3Transform:
    axis = rng.normal(size=3)
    angle = rng.uniform(-max_angle, max_angle)
    return SE3Transform(axis_angle(axis, angle), rng.uniform(-max_trans, max_trans, size=3))


def orthonormalize(R) -> np.ndarray:
    """Nearest rotation (polar decomposition via SVD)."""
    U, _, Vt = np.linalg.svd(R)
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt))])
    return U @ D @ Vt


@dataclass(frozen=True, eq=False)
class CameraModel:
    """Undistorted pinhole camera plus its camera->LiDAR extrinsic."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    extrinsic_to_lidar: SE3Transform = field(default_factory=SE3Transform)
    name: str = ""

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point outside the image")

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @classmethod
    def from_fov(cls, width: int, height: int, hfov_deg: float, extrinsic=None, name="") -> CameraModel:
        f = (width / 2.0) / np.tan(np.deg2rad(hfov_deg) / 2.0)
        return cls(f, f, (width - 1) / 2.0, (height - 1) / 2.0, width, height,
                   extrinsic if extrinsic is not None else SE3Transform(), name)

    def rays(self) -> np.ndarray:
        """``K^{-1} [u, v, 1]`` for every pixel centre, shape ``(H, W, 3)`` (read-only, cached)."""
        cached = self.__dict__.get("_rays")
        if cached is None:
            v, u = np.mgrid[0:self.height, 0:self.width].astype(float)
            cached = np.stack([(u - self.cx) / self.fx, (v - self.cy) / self.fy, np.ones_like(u)], axis=-1)
            cached.flags.writeable = False
            self.__dict__["_rays"] = cached
        return cached


def unproject(p, depth: float, cam: CameraModel) -> np.ndarray:
    """Lift pixel ``p = (u, v)`` at metric ``depth`` to a camera-frame point."""
    if not depth > 0:
        raise InvalidDepthError(f"depth must be positive, got {depth}")
    u, v = p
    return np.array([(u - cam.cx) / cam.fx * depth, (v - cam.cy) / cam.fy * depth, depth])


def project(P, cam: CameraModel) -> tuple[np.ndarray, float]:
    """Pinhole projection; returns ``((u, v), z)``."""
    x, y, z = (float(c) for c in P)
    if not z > 0:
        raise BehindCameraError(f"point behind camera (z={z})")
    return np.array([cam.fx * x / z + cam.cx, cam.fy * y / z + cam.cy]), z


def unproject_depth(depth, cam: CameraModel) -> np.ndarray:
    """Dense lift ``P = D K^{-1} p`` of an ``(H, W)`` depth raster."""
    depth = np.asarray(depth)
    return depth[..., None] * cam.rays()


def project_points(P, cam: CameraModel):
    """Dense projection of ``(..., 3)`` points; returns ``(u, v, z)``.

    Points with ``z <= 0`` produce ``nan`` coordinates in the real part so
    callers can mask them.
    """
    P = np.asarray(P)
    z = P[..., 2]
    zr = real_part(z)
    safe = np.where(zr > 0, z, 1.0)
    u = cam.fx * P[..., 0] / safe + cam.cx
    v = cam.fy * P[..., 1] / safe + cam.cy
    bad = ~(zr > 0)
    if np.any(bad):
        u = np.where(bad, np.nan, u)
        v = np.where(bad, np.nan, v)
    return u, v, z
