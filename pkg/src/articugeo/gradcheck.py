"""Sensitivity of losses to depth: complex-step derivatives vs central differences.

Every raster operation in the library is written to accept complex input and
treats the imaginary part as an infinitesimal, so ``Im f(x + i h d) / h`` is
the directional derivative of ``f`` along ``d`` to machine precision.  Central
finite differences on the real code path give an independent check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import real_part
from .losses import TermValue, pe, masked_mean
from .normals import compensated_prior, loss_snc, nc, normal_from_depth, loss_pnc
from .warping import correspondences

CS_STEP = 1e-30


def _scalar(v) -> complex:
    if isinstance(v, TermValue):
        return v.total / v.count if v.count else 0.0
    return np.asarray(v).item()


def complex_step(f, x, direction, h: float = CS_STEP) -> float:
    """Directional derivative ``df/dx . direction`` via the complex step."""
    xc = np.asarray(x, dtype=complex) + 1j * h * np.asarray(direction, dtype=float)
    return float(np.imag(_scalar(f(xc))) / h)


def central_difference(f, x, direction, h: float) -> float:
    x = np.asarray(x, dtype=float)
    d = np.asarray(direction, dtype=float)
    return float((real_part(_scalar(f(x + h * d))) - real_part(_scalar(f(x - h * d)))) / (2 * h))


FD_STEPS = (1e-4, 1e-5, 1e-6)


def stable_central_difference(f, x, direction, steps) -> float:
    """Central difference at the step where it is most self-consistent.

    Large steps pick up truncation error or kinks, small ones roundoff.  The
    estimate is taken from the adjacent pair of ``steps`` that agree best,
    judged only from the differences themselves.
    """
    est = [central_difference(f, x, direction, h) for h in steps]
    if len(est) == 1:
        return est[0]
    k = min(range(len(est) - 1), key=lambda i: abs(est[i] - est[i + 1]))
    return est[k + 1]


@dataclass
class GradCheckResult:
    name: str
    checked: int
    max_rel_err: float
    worst_pixel: tuple | None
    tol: float

    @property
    def passed(self) -> bool:
        return self.checked > 0 and self.max_rel_err <= self.tol


def rel_err(a: float, b: float, floor: float = 1e-300) -> float:
    return abs(a - b) / max(abs(a), abs(b), floor)


def check_depth_gradient(name, loss_fn, depth, pixels, fd_steps=FD_STEPS,
                         tol: float = 1e-3, abs_floor: float = 1e-12,
                         limit: int | None = None) -> GradCheckResult:
    """Compare derivatives w.r.t. single depth values at ``pixels``.

    ``fd_steps`` are relative to the depth value.  Pairs where both
    derivatives are below ``abs_floor`` are skipped; with ``limit`` the scan
    stops once that many pixels have been compared.
    """
    worst, worst_px, n = 0.0, None, 0
    for v, u in pixels:
        if limit is not None and n >= limit:
            break
        d = np.zeros(depth.shape)
        d[v, u] = 1.0
        cs = complex_step(loss_fn, depth, d)
        fd = stable_central_difference(loss_fn, depth, d, [h * depth[v, u] for h in fd_steps])
        if max(abs(cs), abs(fd)) < abs_floor:
            continue
        n += 1
        e = rel_err(cs, fd)
        if e > worst:
            worst, worst_px = e, (int(v), int(u))
    return GradCheckResult(name, n, worst, worst_px, tol)


def interior_pixels(mask, corr=None, n: int = 100, rng=None, margin: int = 3,
                    boundary_eps: float = 1e-3) -> list[tuple[int, int]]:
    """Random pixels away from the border, optionally away from bilinear cell edges.

    A correspondence whose sub-pixel position sits within ``boundary_eps`` of
    an integer row/column switches stencil cells under tiny depth changes,
    where the loss is only piecewise smooth; those pixels are excluded.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    mask = np.asarray(mask, dtype=bool).copy()
    mask[:margin] = mask[-margin:] = False
    mask[:, :margin] = mask[:, -margin:] = False
    if corr is not None:
        fu = real_part(corr.u) - np.floor(real_part(corr.u))
        fv = real_part(corr.v) - np.floor(real_part(corr.v))
        near = (np.minimum(fu, 1 - fu) < boundary_eps) | (np.minimum(fv, 1 - fv) < boundary_eps)
        mask &= ~np.where(np.isfinite(fu) & np.isfinite(fv), near, True)
    cand = np.argwhere(mask)
    if len(cand) == 0:
        return []
    pick = rng.choice(len(cand), size=min(n, len(cand)), replace=False)
    return [tuple(p) for p in cand[np.sort(pick)]]


@dataclass(eq=False)
class DepthLossFixture:
    """Two overlapping views with a non-optimal target depth."""

    target_cam: object
    source_cam: object
    X: object
    depth: np.ndarray
    target_img: np.ndarray
    source_img: np.ndarray
    source_valid: np.ndarray
    source_normals: object
    target_prior: object
    source_prior: object

    def photometric(self, D):
        corr = correspondences(D, self.target_cam, self.source_cam, self.X)
        rec, m = corr.sample(self.source_img, self.source_valid)
        return masked_mean(pe(self.target_img, rec, m), m)

    def nc(self, D):
        return nc(normal_from_depth(D, self.target_cam), self.target_prior)

    def snc(self, D):
        return loss_snc(normal_from_depth(D, self.target_cam), self.source_normals, D, self.X,
                        self.target_cam, self.source_cam)

    def pnc_s(self, D):
        cp = compensated_prior(self.source_prior, D, self.X, self.target_cam, self.source_cam)
        return loss_pnc("S", self.target_prior, [cp])

    def losses(self):
        return {"pe": self.photometric, "NC": self.nc, "SNC": self.snc, "PNC_S": self.pnc_s}


def synthetic_fixture(seed: int = 0, target: str = "C5", source: str = "C6",
                      depth_noise: float = 0.03, normal_noise_deg: float = 3.0) -> DepthLossFixture:
    """Fixture from the synthetic world with a smoothly perturbed target depth."""
    from . import synth
    from .rig import ContextSpec, ContextKind, RigState, context_transform

    rig = synth.default_rig()
    traj = synth.make_trajectory(2)
    scene = synth.island_scene()
    r = synth.render(scene, rig, traj, 0)
    ctx = [c for c in rig.spatial_contexts(target) if c.source_cam == source]
    if not ctx:
        ctx = [ContextSpec(ContextKind.WV_SPATIAL, target, source)]
    X = context_transform(ctx[0], rig, RigState(0, traj.hinge(0)))
    rng = np.random.default_rng(seed)
    h, w = rig.cameras[target].shape
    v, u = np.mgrid[0:h, 0:w]
    bump = 1 + depth_noise * np.sin(2 * np.pi * (u / rng.uniform(20, 40) + v / rng.uniform(15, 30)) + rng.uniform(0, 6))
    depth = r.cameras[target].depth * bump
    _, tp = synth.prior_provider(r.cameras[target], 1.0, normal_noise_deg, seed, (0,))
    _, sp = synth.prior_provider(r.cameras[source], 1.0, normal_noise_deg, seed, (1,))
    return DepthLossFixture(rig.cameras[target], rig.cameras[source], X, depth,
                            r.cameras[target].image, r.cameras[source].image, r.cameras[source].depth > 0,
                            normal_from_depth(r.cameras[source].depth, rig.cameras[source]), tp, sp)


def run_gradchecks(fixture: DepthLossFixture | None = None, n: int = 100, seed: int = 0,
                   tol: float = 1e-3, fd_steps=FD_STEPS) -> list[GradCheckResult]:
    fx = fixture or synthetic_fixture(seed)
    corr = correspondences(fx.depth, fx.target_cam, fx.source_cam, fx.X)
    _, m = corr.sample(fx.source_img, fx.source_valid)
    # spares stand in for pixels whose derivative is exactly flat
    pixels = interior_pixels(m, corr, 2 * n, np.random.default_rng(seed))
    return [check_depth_gradient(name, f, fx.depth, pixels, fd_steps, tol, limit=n)
            for name, f in fx.losses().items()]
