"""Photometric and depth reconstruction losses and their aggregation.

All scalar losses come back as :class:`TermValue` (masked sum plus valid
count) so that terms can be pooled across contexts, cameras and frames
before dividing.  Reductions run in a fixed order, making results
bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import FormatError
from .geometry import cabs, real_part
from .rasters import as_image, check_same_shape

SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2
DEFAULT_ALPHA = 0.85


@dataclass(frozen=True)
class TermValue:
    total: complex | float = 0.0
    count: int = 0

    @property
    def value(self):
        return self.total / self.count if self.count else 0.0

    @property
    def present(self) -> bool:
        return self.count > 0

    def __add__(self, other: TermValue) -> TermValue:
        return TermValue(self.total + other.total, self.count + other.count)

    def __float__(self) -> float:
        return float(real_part(self.value))


def masked_mean(values, mask) -> TermValue:
    mask = np.asarray(mask, dtype=bool)
    values = np.asarray(values)
    count = int(mask.sum())
    if count == 0:
        return TermValue(0.0, 0)
    # flatten before summing: fixed traversal order
    return TermValue(np.sum(values[mask].ravel()), count)


def _box3(a):
    """3x3 box sum with reflection padding over the first two axes (separable)."""
    pad = [(1, 1), (1, 1)] + [(0, 0)] * (a.ndim - 2)
    p = np.pad(a, pad, mode="reflect")
    h, w = a.shape[:2]
    rows = p[0:h] + p[1:h + 1] + p[2:h + 2]
    return rows[:, 0:w] + rows[:, 1:w + 1] + rows[:, 2:w + 2]


def ssim(x, y, mask=None):
    """Per-pixel, per-channel SSIM over a masked 3x3 window.

    Returns an ``(H, W, C)`` map; pixels with no valid neighbour get 1.
    """
    x = as_image(x)
    y = as_image(y)
    check_same_shape(x, y, names=["x", "y"])
    if x.shape != y.shape:
        raise ValueError(f"channel mismatch {x.shape} vs {y.shape}")
    if mask is None:
        m = np.ones(x.shape[:2])
    else:
        check_same_shape(x, mask, names=["image", "mask"])
        m = np.asarray(mask, dtype=float)
        rows, cols = np.flatnonzero(m.any(axis=1)), np.flatnonzero(m.any(axis=0))
        if rows.size == 0:
            return np.ones(np.broadcast_shapes(x.shape, y.shape), dtype=np.result_type(x, y))
        # beyond 2 px from the mask's bounding box no window holds a valid pixel
        # (SSIM = 1 there), and reflection at the crop edge only sees zeros
        h, w = m.shape
        r0, r1 = max(rows[0] - 2, 0), min(rows[-1] + 3, h)
        c0, c1 = max(cols[0] - 2, 0), min(cols[-1] + 3, w)
        if (r1 - r0) * (c1 - c0) < m.size and min(r1 - r0, c1 - c0) > 1:
            inner = ssim(x[r0:r1, c0:c1], y[r0:r1, c0:c1], m[r0:r1, c0:c1])
            out = np.ones((h, w) + inner.shape[2:], dtype=inner.dtype)
            out[r0:r1, c0:c1] = inner
            return out
    m = m[..., None]
    n = _box3(m)
    has = n > 0
    n = np.where(has, n, 1.0)
    mu_x = _box3(m * x) / n
    mu_y = _box3(m * y) / n
    sxx = _box3(m * x * x) / n - mu_x * mu_x
    syy = _box3(m * y * y) / n - mu_y * mu_y
    sxy = _box3(m * x * y) / n - mu_x * mu_y
    num = (2 * mu_x * mu_y + SSIM_C1) * (2 * sxy + SSIM_C2)
    den = (mu_x * mu_x + mu_y * mu_y + SSIM_C1) * (sxx + syy + SSIM_C2)
    return np.where(np.broadcast_to(has, num.shape), num / den, 1.0)


def pe(x, y, mask=None, alpha: float = DEFAULT_ALPHA):
    """Per-pixel photometric error ``(1-a)|x-y| + a (1-SSIM)/2``, channel mean."""
    x = as_image(x)
    y = as_image(y)
    l1 = cabs(x - y)
    s = ssim(x, y, mask)
    return ((1 - alpha) * l1 + alpha * (1 - s) / 2).mean(axis=-1)


def min_over_sources(maps_and_masks):
    """Per-pixel minimum over candidates, ignoring each candidate's invalid pixels."""
    maps_and_masks = list(maps_and_masks)
    if not maps_and_masks:
        raise ValueError("need at least one source")
    best, any_valid = None, None
    for m, k in maps_and_masks:
        k = np.asarray(k, dtype=bool)
        if best is None:
            best = np.where(k, m, np.inf)
            any_valid = k.copy()
            continue
        take = k & (real_part(m) < real_part(best))
        best = np.where(take, m, best)
        any_valid |= k
    return np.where(any_valid, best, 0.0), any_valid


def loss_temporal(target, warped_by_tau, alpha: float = DEFAULT_ALPHA) -> TermValue:
    """``min_tau pe(I_t, I~_tau)``; ``warped_by_tau`` is a list of ``(image, mask)``."""
    warped_by_tau = list(warped_by_tau)
    if not warped_by_tau:
        raise ValueError("temporal loss needs at least one source frame")
    maps = [(pe(target, img, m, alpha), m) for img, m in warped_by_tau]
    best, valid = min_over_sources(maps)
    return masked_mean(best, valid)


def loss_spatial(target, warped, mask, alpha: float = DEFAULT_ALPHA) -> TermValue:
    return masked_mean(pe(target, warped, mask, alpha), mask)


def loss_spatiotemporal(target, warped_by_tau, alpha: float = DEFAULT_ALPHA) -> TermValue:
    if not list(warped_by_tau):
        raise ValueError("spatial-temporal loss needs at least one context")
    return loss_temporal(target, warped_by_tau, alpha)


def loss_mvrc(recon_spatial, mask_spatial, recon_st_by_tau, alpha: float = DEFAULT_ALPHA) -> TermValue:
    """``min_tau pe(I~_j^t, I~_j^tau)`` over intersected masks."""
    recon_st_by_tau = list(recon_st_by_tau)
    if not recon_st_by_tau:
        raise ValueError("MVRC needs at least one spatial-temporal reconstruction")
    maps = []
    for img, m in recon_st_by_tau:
        both = np.asarray(mask_spatial, dtype=bool) & np.asarray(m, dtype=bool)
        maps.append((pe(recon_spatial, img, both, alpha), both))
    best, valid = min_over_sources(maps)
    return masked_mean(best, valid)


def loss_sdc(depth_target, reprojected, mask) -> TermValue:
    """Mean ``|D_i - D~_j|`` in meters over the valid overlap."""
    check_same_shape(depth_target, reprojected, mask, names=["depth", "reprojected", "mask"])
    valid = (np.asarray(mask, dtype=bool) & (real_part(depth_target) > 0)
             & (real_part(reprojected) > 0))
    return masked_mean(cabs(np.asarray(depth_target) - np.asarray(reprojected)), valid)


def loss_smoothness(depth, img) -> TermValue:
    """Edge-aware smoothness of mean-normalised disparity."""
    img = as_image(img)
    check_same_shape(depth, img, names=["depth", "image"])
    depth = np.asarray(depth)
    valid = real_part(depth) > 0
    disp = np.where(valid, 1.0 / np.where(valid, depth, 1.0), 0.0)
    if not valid.any():
        return TermValue(0.0, 0)
    disp = disp / (np.sum(disp[valid]) / valid.sum())
    gx = cabs(disp[:, 1:] - disp[:, :-1]) * np.exp(-np.abs(img[:, 1:] - img[:, :-1]).mean(-1))
    gy = cabs(disp[1:, :] - disp[:-1, :]) * np.exp(-np.abs(img[1:, :] - img[:-1, :]).mean(-1))
    vx = valid[:, 1:] & valid[:, :-1]
    vy = valid[1:, :] & valid[:-1, :]
    tx, ty = masked_mean(gx, vx), masked_mean(gy, vy)
    if not (tx.present or ty.present):
        return TermValue(0.0, 0)
    return TermValue(tx.value + ty.value, 1)


# --- weights and aggregation --------------------------------------------------

@dataclass
class LossWeights:
    """Term weights.  None of these values come from published results."""

    lambda_T: float = 1.0
    lambda_S: float = 0.1
    lambda_ST: float = 0.1
    lambda_MVRC: float = 0.1
    lambda_SDC: float = 0.1
    lambda_s: float = 1e-3
    lambda_NC: float = 1.0
    lambda_SNC: float = 1.0
    lambda_PNC: float = 1.0
    lambda_CH: float = 1.0
    lambda_VPC: float = 1.0
    alpha: float = DEFAULT_ALPHA

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ValueError(f"{f.name} must be non-negative")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")

    @classmethod
    def from_dict(cls, data: dict) -> LossWeights:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown weight(s): {sorted(unknown)}")
        return cls(**{k: float(v) for k, v in data.items()})

    def weight_for(self, term: str) -> float:
        family = term.split("_")[0]
        if family == "photo":
            ctx = term.split("_")[1]
            return {"T": self.lambda_T, "S": self.lambda_S, "ST": self.lambda_ST,
                    "MVRC": self.lambda_MVRC}[ctx]
        return {"sdc": self.lambda_SDC, "smooth": self.lambda_s, "nc": self.lambda_NC,
                "snc": self.lambda_SNC, "pnc": self.lambda_PNC, "ch": self.lambda_CH,
                "vpc": self.lambda_VPC}[family]


@dataclass
class LossReport:
    terms: dict[str, TermValue] = field(default_factory=dict)
    total: float = 0.0
    absent: list[str] = field(default_factory=list)

    def value(self, name: str) -> float:
        return float(self.terms[name])

    def to_text(self) -> str:
        lines = [f"{name} {float(t):.17g} {t.count}" for name, t in self.terms.items()]
        lines.append(f"total {self.total:.17g} {sum(t.count for t in self.terms.values())}")
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        Path(path).write_text(self.to_text())


def aggregate(terms: dict[str, TermValue], weights: LossWeights | None = None) -> LossReport:
    """Weighted sum over present terms; empty terms contribute 0 and are flagged."""
    weights = weights or LossWeights()
    total = 0.0
    absent = []
    for name, t in terms.items():
        if t.present:
            total += weights.weight_for(name) * float(t)
        else:
            absent.append(name)
    return LossReport(dict(terms), total, absent)


def read_report(path) -> dict[str, tuple[float, int]]:
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 3:
            raise FormatError(f"{path}:{lineno}: expected 'name value count'")
        out[parts[0]] = (float(parts[1]), int(parts[2]))
    return out
