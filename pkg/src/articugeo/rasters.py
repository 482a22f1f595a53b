"""Raster containers and the binary raster file formats.

Depth rasters are ``(H, W)`` float arrays in meters with 0 marking invalid
pixels; images are ``(H, W, C)`` floats in [0, 1]; masks are ``(H, W)`` bool.
Surface normals carry their own validity grid, see :class:`NormalMap`.

File layouts (all little-endian)::

    DPTF  u32 W, u32 H, W*H float32          depth, meters
    IMGF  u32 W, u32 H, u32 C, W*H*C float32 interleaved image
    MSK1  u32 W, u32 H, W*H bytes in {0,1}   mask
    NRMF  u32 W, u32 H, W*H*3 float32        normals (validity in a MSK1 file)
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DimensionMismatchError, FormatError


@dataclass(eq=False)
class NormalMap:
    """Per-pixel unit normals in camera coordinates.

    ``camera_facing`` records the orientation: True means ``N . (-P) > 0``;
    False means the raw tangent cross-product orientation, which points away
    from the camera on visible surfaces.
    """

    vectors: np.ndarray
    valid: np.ndarray
    camera_facing: bool = True

    @property
    def shape(self) -> tuple[int, int]:
        return self.valid.shape

    def flipped(self) -> NormalMap:
        return NormalMap(-self.vectors, self.valid.copy(), not self.camera_facing)

    def raw(self) -> NormalMap:
        return self.flipped() if self.camera_facing else self

    def facing(self) -> NormalMap:
        return self if self.camera_facing else self.flipped()


def check_same_shape(*arrays, names=None) -> None:
    shapes = [np.shape(a)[:2] for a in arrays]
    if any(s != shapes[0] for s in shapes):
        label = ", ".join(names) if names else "rasters"
        raise DimensionMismatchError(f"{label} have mismatched sizes {shapes}")


def as_image(img) -> np.ndarray:
    img = np.asarray(img)
    return img[..., None] if img.ndim == 2 else img


# --- binary formats ----------------------------------------------------------

def _read(path, magic: bytes, nheader: int):
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise FileNotFoundError(f"cannot read {path}: {exc.strerror}") from exc
    if raw[:4] != magic:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}, expected {magic!r}")
    head = struct.unpack(f"<{nheader}I", raw[4:4 + 4 * nheader])
    return raw[4 + 4 * nheader:], head, path


def write_depth(path, depth) -> None:
    depth = np.asarray(depth, dtype="<f4")
    h, w = depth.shape
    Path(path).write_bytes(b"DPTF" + struct.pack("<2I", w, h) + depth.tobytes(order="C"))


def read_depth(path) -> np.ndarray:
    body, (w, h), path = _read(path, b"DPTF", 2)
    if len(body) != 4 * w * h:
        raise FormatError(f"{path}: expected {4 * w * h} payload bytes, got {len(body)}")
    return np.frombuffer(body, dtype="<f4").reshape(h, w).astype(np.float64)


def write_image(path, img) -> None:
    img = as_image(np.asarray(img, dtype="<f4"))
    h, w, c = img.shape
    Path(path).write_bytes(b"IMGF" + struct.pack("<3I", w, h, c) + img.tobytes(order="C"))


def read_image(path) -> np.ndarray:
    body, (w, h, c), path = _read(path, b"IMGF", 3)
    if c not in (1, 3):
        raise FormatError(f"{path}: channels must be 1 or 3, got {c}")
    if len(body) != 4 * w * h * c:
        raise FormatError(f"{path}: truncated image payload")
    return np.frombuffer(body, dtype="<f4").reshape(h, w, c).astype(np.float64)


def write_mask(path, mask) -> None:
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    Path(path).write_bytes(b"MSK1" + struct.pack("<2I", w, h) + mask.astype(np.uint8).tobytes(order="C"))


def read_mask(path) -> np.ndarray:
    body, (w, h), path = _read(path, b"MSK1", 2)
    if len(body) != w * h:
        raise FormatError(f"{path}: truncated mask payload")
    data = np.frombuffer(body, dtype=np.uint8)
    if np.any(data > 1):
        raise FormatError(f"{path}: mask bytes must be 0 or 1")
    return data.reshape(h, w).astype(bool)


def write_normals(path, normals: NormalMap, mask_path=None) -> None:
    vec = np.asarray(normals.vectors, dtype="<f4")
    h, w, _ = vec.shape
    Path(path).write_bytes(b"NRMF" + struct.pack("<2I", w, h) + vec.tobytes(order="C"))
    if mask_path is not None:
        write_mask(mask_path, normals.valid)


def read_normals(path, mask_path=None, camera_facing: bool = True) -> NormalMap:
    body, (w, h), path = _read(path, b"NRMF", 2)
    if len(body) != 12 * w * h:
        raise FormatError(f"{path}: truncated normal payload")
    vec = np.frombuffer(body, dtype="<f4").reshape(h, w, 3).astype(np.float64)
    if mask_path is not None:
        valid = read_mask(mask_path)
        check_same_shape(vec, valid, names=[str(path), str(mask_path)])
    else:
        valid = np.linalg.norm(vec, axis=-1) > 0.5
    # float32 storage; restore unit length
    n = np.linalg.norm(vec, axis=-1, keepdims=True)
    vec = np.where(valid[..., None], vec / np.where(n > 0, n, 1.0), 0.0)
    return NormalMap(vec, valid, camera_facing)
