"""Run manifests: a JSON index of rendered rasters, poses and point clouds.

Paths inside a manifest are relative to the manifest's directory.  Layout::

    {"format": "articugeo-manifest-1", "seed": 0, "rig": "rig.yaml",
     "motions": "motions.txt",
     "frames": [{"index": 0, "front_pose": [16], "rear_pose": [16],
                 "cross_vehicle": [16], "clouds": {"front": ..., "rear": ...},
                 "cameras": {"C0": {"image": ..., "depth": ..., ...}}}]}

Camera entries may carry ``image``, ``depth``, ``valid``, ``normals``,
``normal_mask``, ``ground``, ``prior_normals`` and ``prior_normal_mask``.
Only ``depth`` is needed for metric evaluation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import rasters
from .errors import FormatError
from .geometry import SE3Transform
from .icp import write_ply
from .pose import write_motions
from .rig import RigConfig, load_rig, save_rig
from .synth import Scene, Trajectory, articulated_motion, prior_provider, render, LidarPattern

FORMAT = "articugeo-manifest-1"


@dataclass
class Manifest:
    root: Path
    frames: list[dict]
    rig: str | None = None
    motions: str | None = None
    seed: int = 0
    extra: dict = field(default_factory=dict)

    def path(self, rel: str) -> Path:
        return self.root / rel

    @property
    def frame_indices(self) -> list[int]:
        return [int(f["index"]) for f in self.frames]

    def frame(self, index: int) -> dict:
        for f in self.frames:
            if int(f["index"]) == index:
                return f
        raise KeyError(f"manifest has no frame {index}")

    def camera_entry(self, index: int, cam: str) -> dict:
        cams = self.frame(index).get("cameras", {})
        if cam not in cams:
            raise KeyError(f"manifest frame {index} has no camera {cam}")
        return cams[cam]

    def load_rig(self) -> RigConfig:
        if self.rig is None:
            raise FormatError(f"{self.root / 'manifest.json'}: no rig entry")
        return load_rig(self.path(self.rig))

    def transform(self, index: int, key: str) -> SE3Transform | None:
        vals = self.frame(index).get(key)
        return None if vals is None else SE3Transform.from_matrix(vals)

    def to_dict(self) -> dict:
        out = {"format": FORMAT, "frames": self.frames, "seed": self.seed}
        if self.rig is not None:
            out["rig"] = self.rig
        if self.motions is not None:
            out["motions"] = self.motions
        out.update(self.extra)
        return out

    def write(self, path=None) -> Path:
        path = Path(path) if path is not None else self.root / "manifest.json"
        path.write_text(json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n")
        return path


def load_manifest(path) -> Manifest:
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    try:
        text = path.read_text()
    except OSError as exc:
        raise FileNotFoundError(f"cannot read manifest {path}: {exc.strerror}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}:{exc.lineno}: {exc.msg}") from None
    if not isinstance(data, dict) or "frames" not in data:
        raise FormatError(f"{path}: manifest needs a 'frames' list")
    if data.get("format", FORMAT) != FORMAT:
        raise FormatError(f"{path}: unsupported manifest format {data.get('format')!r}")
    extra = {k: v for k, v in data.items() if k not in ("format", "frames", "rig", "motions", "seed")}
    return Manifest(path.parent, list(data["frames"]), data.get("rig"), data.get("motions"),
                    int(data.get("seed", 0)), extra)


def _mat(T: SE3Transform) -> list[float]:
    return [float(x) for x in T.as_matrix().ravel()]


def write_render_set(out_dir, scene: Scene, rig: RigConfig, traj: Trajectory, seed: int = 0,
                     channels: int = 1, prior_scale: float = 1.0, normal_noise_deg: float = 0.0,
                     lidar: LidarPattern | None = None, lidar_noise: float = 0.0,
                     frames=None) -> Manifest:
    """Render every frame and camera to disk and write ``manifest.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_rig(rig, out / "rig.yaml")
    frames = list(range(len(traj))) if frames is None else list(frames)
    entries = []
    for k in frames:
        r = render(scene, rig, traj, k, channels, lidar, lidar_noise, seed)
        fdir = out / f"frame{k:03d}"
        fdir.mkdir(exist_ok=True)
        cams = {}
        for c_idx, name in enumerate(rig.camera_ids):
            cr = r.cameras[name]
            rel = f"frame{k:03d}/{name}"
            rasters.write_image(out / f"{rel}.img", cr.image)
            rasters.write_depth(out / f"{rel}.dpt", cr.depth)
            rasters.write_mask(out / f"{rel}_valid.msk", cr.depth > 0)
            rasters.write_normals(out / f"{rel}.nrm", cr.normals, out / f"{rel}_nrm.msk")
            rasters.write_mask(out / f"{rel}_ground.msk", cr.ground)
            _, prior_n = prior_provider(cr, prior_scale, normal_noise_deg, seed, (k, c_idx))
            rasters.write_normals(out / f"{rel}_prior.nrm", prior_n, out / f"{rel}_prior_nrm.msk")
            cams[name] = {"image": f"{rel}.img", "depth": f"{rel}.dpt", "valid": f"{rel}_valid.msk",
                          "normals": f"{rel}.nrm", "normal_mask": f"{rel}_nrm.msk",
                          "ground": f"{rel}_ground.msk", "prior_normals": f"{rel}_prior.nrm",
                          "prior_normal_mask": f"{rel}_prior_nrm.msk"}
        entry = {"index": k, "cameras": cams, "front_pose": _mat(r.front_pose),
                 "rear_pose": _mat(r.rear_pose), "cross_vehicle": _mat(r.cross_vehicle)}
        if r.clouds:
            entry["clouds"] = {}
            for vehicle, cloud in r.clouds.items():
                write_ply(fdir / f"{vehicle}.ply", cloud)
                entry["clouds"][vehicle] = f"frame{k:03d}/{vehicle}.ply"
        entries.append(entry)
    motions = {}
    for a, b in zip(frames[:-1], frames[1:]):
        if b != a + 1:
            continue
        front, rear, _, _ = articulated_motion(traj, a, b)
        motions[(a, "front")] = front
        motions[(a, "rear")] = rear
    write_motions(out / "motions.txt", motions)
    m = Manifest(out, entries, "rig.yaml", "motions.txt", int(seed))
    m.write()
    return m


def motion_dict_from_poses(manifest: Manifest) -> dict[tuple[int, str], SE3Transform]:
    """Per-step joint motions derived from the world poses stored in a manifest."""
    from .geometry import compose, inverse

    out = {}
    idx = manifest.frame_indices
    for a in idx:
        if a + 1 not in idx:
            continue
        for vehicle in ("front", "rear"):
            Pa = manifest.transform(a, f"{vehicle}_pose")
            Pb = manifest.transform(a + 1, f"{vehicle}_pose")
            if Pa is None or Pb is None:
                continue
            out[(a, vehicle)] = compose(inverse(Pb), Pa)
    return out


def stack_depths(manifest: Manifest, rig_ids, key: str = "depth") -> list[np.ndarray]:
    out = []
    for k in manifest.frame_indices:
        for cam in rig_ids:
            out.append(rasters.read_depth(manifest.path(manifest.camera_entry(k, cam)[key])))
    return out
