"""Command-line entry point: ``articugeo {render,losses,calibrate,verify,metrics}``.

Exit codes: 0 success, 1 usage, 2 I/O or format problems, 3 numerical
failure (including failed verification checks).

``--config`` takes a YAML file with one optional section per command; keys
mirror the long flag names (``cv_types``, ``max_depth``, ...) plus the
nested ``weights`` (losses), ``tolerances``/``options`` (verify) and
``icp`` (calibrate) mappings.  Flags given on the command line win.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .errors import ArticugeoError, FormatError
from .geometry import SE3Transform, compose, inverse, rotation_angle

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _section(args, name: str) -> dict:
    if args.config is None:
        return {}
    path = Path(args.config)
    try:
        data = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise FileNotFoundError(f"cannot read config {path}: {exc.strerror}") from exc
    except yaml.YAMLError as exc:
        raise FormatError(f"{path}: {exc}") from None
    data = data or {}
    if not isinstance(data, dict):
        raise FormatError(f"{path}: expected a mapping with per-command sections")
    sec = data.get(name) or {}
    if not isinstance(sec, dict):
        raise FormatError(f"{path}: section {name!r} must be a mapping")
    return sec


def _pick(args, sec: dict, key: str, default=None):
    v = getattr(args, key, None)
    if v is not None:
        return v
    return sec.get(key, default)


def _emit(text: str, out) -> None:
    sys.stdout.write(text)
    if out is not None:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)


def parse_cv_types(text) -> tuple[int, ...]:
    if isinstance(text, (list, tuple)):
        vals = [int(x) for x in text]
    else:
        vals = [int(x) for x in str(text).replace(" ", "").split(",") if x != ""]
    for v in vals:
        if v not in (0, 1, 2):
            raise UsageError(f"cross-vehicle type must be 0, 1 or 2, got {v}")
    return tuple(sorted(set(vals)))


def parse_key_values(pairs) -> dict:
    out = {}
    for item in pairs or []:
        if "=" not in item:
            raise UsageError(f"expected key=value, got {item!r}")
        k, v = item.split("=", 1)
        try:
            out[k.strip()] = yaml.safe_load(v)
        except yaml.YAMLError:
            raise UsageError(f"bad value in {item!r}") from None
    return out


# --- commands ---------------------------------------------------------------------

def cmd_render(args) -> int:
    from . import synth
    from .manifest import write_render_set
    from .rig import load_rig

    sec = _section(args, "render")
    scene_path = _pick(args, sec, "scene")
    rig_path = _pick(args, sec, "rig")
    traj_path = _pick(args, sec, "trajectory")
    scene = synth.load_scene(scene_path) if scene_path else synth.island_scene()
    rig = load_rig(rig_path) if rig_path else synth.default_rig()
    traj = synth.load_trajectory(traj_path) if traj_path else synth.make_trajectory(10)
    frames = _pick(args, sec, "frames")
    if frames is not None:
        frames = int(frames)
        if not 0 < frames <= len(traj):
            raise UsageError(f"--frames must lie in 1..{len(traj)}")
    beams = int(_pick(args, sec, "lidar_beams", 0))
    lidar = None
    if beams > 0:
        lidar = synth.LidarPattern(int(_pick(args, sec, "lidar_azimuths", 1800)),
                                   tuple(np.linspace(-30.67, 10.67, beams)))
    out = Path(args.out or sec.get("out", "render"))
    m = write_render_set(out, scene, rig, traj, args.seed, int(_pick(args, sec, "channels", 1)),
                         float(_pick(args, sec, "prior_scale", 1.0)),
                         float(_pick(args, sec, "normal_noise_deg", 0.0)),
                         lidar, float(_pick(args, sec, "lidar_noise", 0.0)),
                         None if frames is None else range(frames))
    m.extra["run"] = {"scene": scene_path, "rig": rig_path, "trajectory": traj_path, "seed": args.seed}
    path = m.write()
    print(f"wrote {len(m.frames)} frame(s) x {len(rig.camera_ids)} camera(s) to {path}")
    return EXIT_OK


def cmd_losses(args) -> int:
    from .losses import LossWeights
    from .manifest import load_manifest
    from .pipeline import ALL_FAMILIES, LossOptions, compute_losses

    sec = _section(args, "losses")
    weights = dict(sec.get("weights") or {})
    if args.weights:
        from .synth import load_yaml
        weights.update(load_yaml(args.weights, "weights"))
    try:
        w = LossWeights.from_dict(weights)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    families = _pick(args, sec, "families")
    if families is None:
        families = ALL_FAMILIES
    elif isinstance(families, str):
        families = tuple(f for f in families.split(",") if f)
    unknown = set(families) - set(ALL_FAMILIES)
    if unknown:
        raise UsageError(f"unknown loss famil{'ies' if len(unknown) > 1 else 'y'}: {sorted(unknown)}")
    opts = LossOptions(cv_types=parse_cv_types(_pick(args, sec, "cv_types", "0,1,2")),
                       within_vehicle=not (args.no_within_vehicle or sec.get("no_within_vehicle", False)),
                       families=tuple(families),
                       depth_scale=float(_pick(args, sec, "depth_scale", 1.0)),
                       motions_path=_pick(args, sec, "motions"), alpha=w.alpha)
    if not opts.depth_scale > 0:
        raise UsageError("--depth-scale must be positive")
    report = compute_losses(load_manifest(args.manifest), opts, w)
    _emit(report.to_text(), args.out or sec.get("out"))
    for name in report.absent:
        print(f"note: {name} had no valid pixels", file=sys.stderr)
    return EXIT_OK


def _icp_settings(args, sec: dict):
    from .icp import DEFAULT_GATES

    cfg = dict(sec.get("icp") or {})
    if args.icp_config:
        from .synth import load_yaml
        cfg.update(load_yaml(args.icp_config, "icp"))
    gates = args.gates if args.gates is not None else cfg.get("gates", DEFAULT_GATES)
    if isinstance(gates, str):
        gates = [float(g) for g in gates.split(",") if g]
    init = args.init if args.init is not None else cfg.get("initial_guess")
    T0 = SE3Transform() if init is None else transform_arg(init)
    return ([float(g) for g in gates], T0, int(cfg.get("max_iterations", 100)),
            float(cfg.get("convergence_eps", 1e-5)))


def transform_arg(value) -> SE3Transform:
    """16 row-major values, given inline, as a list, or as a file (plain or calibration output)."""
    if isinstance(value, str):
        p = Path(value)
        if p.is_file():
            words = p.read_text().split()
            if words and words[0] == "transform":
                return read_calibration(p)[0]
            value = words
        else:
            value = value.replace(",", " ").split()
    try:
        vals = [float(x) for x in value]
    except (TypeError, ValueError):
        raise UsageError(f"transform must be 16 numbers, got {value!r}") from None
    if len(vals) != 16:
        raise UsageError(f"transform needs 16 values, got {len(vals)}")
    return SE3Transform.from_matrix(vals)


def format_calibration(T: SE3Transform, rms: float, iterations: int) -> str:
    vals = " ".join(f"{x:.17g}" for x in T.as_matrix().ravel())
    return f"transform {vals}\nrms {rms:.17g}\niterations {iterations}\n"


def read_calibration(path) -> tuple[SE3Transform, float, int]:
    fields = {}
    for line in Path(path).read_text().splitlines():
        parts = line.split()
        if parts:
            fields[parts[0]] = parts[1:]
    try:
        return (SE3Transform.from_matrix([float(x) for x in fields["transform"]]),
                float(fields["rms"][0]), int(fields["iterations"][0]))
    except (KeyError, IndexError, ValueError) as exc:
        raise FormatError(f"{path}: malformed calibration file ({exc})") from None


def cmd_calibrate(args) -> int:
    from .icp import icp_coarse_to_fine, read_ply

    sec = _section(args, "calibrate")
    gates, T0, iters, eps = _icp_settings(args, sec)
    front = read_ply(args.front)
    rear = read_ply(args.rear)
    stages = icp_coarse_to_fine(rear, front, T0, gates, iters, eps)
    final = stages[-1]
    text = format_calibration(final.transform, final.rms_residual, sum(s.iterations for s in stages))
    _emit(text, args.out or sec.get("out"))
    if args.ground_truth:
        E = compose(inverse(transform_arg(args.ground_truth)), final.transform)
        print(f"error {np.degrees(rotation_angle(E.rotation)):.6f} deg {np.linalg.norm(E.translation):.6f} m",
              file=sys.stderr)
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import SUITES, format_report, run_suite

    sec = _section(args, "verify")
    if args.suite != "all" and args.suite not in SUITES:
        raise UsageError(f"unknown suite {args.suite!r}; choose from {', '.join(SUITES)} or all")
    tol = dict(sec.get("tolerances") or {})
    tol.update(parse_key_values(args.tol))
    opts = dict(sec.get("options") or {})
    opts.update(parse_key_values(args.option))
    try:
        checks = run_suite(args.suite, tol, opts, args.seed)
    except KeyError as exc:
        raise UsageError(exc.args[0]) from None
    _emit(format_report(checks), args.out or sec.get("out"))
    return EXIT_OK if all(c.passed for c in checks) else EXIT_NUMERIC


def aligned_depths(pred, gt):
    """Yield ``(pred_depth, gt_depth)`` for every frame/camera, in ground-truth order."""
    from . import rasters

    if pred.frame_indices != gt.frame_indices:
        raise FormatError(f"manifests are misaligned: frames {pred.frame_indices} vs {gt.frame_indices}")
    for k in gt.frame_indices:
        cams_g = sorted(gt.frame(k).get("cameras", {}))
        cams_p = sorted(pred.frame(k).get("cameras", {}))
        if cams_g != cams_p:
            raise FormatError(f"manifests are misaligned at frame {k}: cameras {cams_p} vs {cams_g}")
        for c in cams_g:
            yield (rasters.read_depth(pred.path(pred.camera_entry(k, c)["depth"])),
                   rasters.read_depth(gt.path(gt.camera_entry(k, c)["depth"])))


def cmd_metrics(args) -> int:
    from .manifest import load_manifest
    from .metrics import DEFAULT_MAX_DEPTH, evaluate_many

    sec = _section(args, "metrics")
    max_depth = float(_pick(args, sec, "max_depth", DEFAULT_MAX_DEPTH))
    if not max_depth > 0:
        raise UsageError("--max-depth must be positive")
    median = bool(args.median_scale or sec.get("median_scale", False))
    pairs = aligned_depths(load_manifest(args.pred), load_manifest(args.gt))
    report = evaluate_many(pairs, max_depth, median)
    _emit(report.to_text(), args.out or sec.get("out"))
    return EXIT_OK


# --- parser -----------------------------------------------------------------------

def _global_flags(parser, default) -> None:
    parser.add_argument("--seed", type=int, default=default(0), help="seed for every random stream (default 0)")
    parser.add_argument("--out", default=default(None),
                        help="output directory (render) or report file (other commands)")
    parser.add_argument("--config", default=default(None), help="YAML file with per-command defaults")


def build_parser() -> argparse.ArgumentParser:
    # global flags are accepted before or after the command; the subcommand
    # copies must not overwrite values given before it
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, lambda v: argparse.SUPPRESS)

    p = _Parser(prog="articugeo", description="Geometry and loss toolkit for articulated multi-camera rigs.")
    _global_flags(p, lambda v: v)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    r = sub.add_parser("render", parents=[common], help="render a synthetic scene to a manifest")
    r.add_argument("--scene", help="scene YAML (default: built-in island scene)")
    r.add_argument("--rig", help="rig YAML (default: built-in ten-camera rig)")
    r.add_argument("--trajectory", help="trajectory YAML (default: 10 frames)")
    r.add_argument("--frames", type=int, help="render only the first N frames")
    r.add_argument("--channels", type=int, choices=(1, 3))
    r.add_argument("--prior-scale", type=float, help="scale of the pseudo depth prior")
    r.add_argument("--normal-noise-deg", type=float, help="angular noise of the pseudo normal prior")
    r.add_argument("--lidar-beams", type=int, help="also write LiDAR clouds with this many beams")
    r.add_argument("--lidar-azimuths", type=int, help="LiDAR azimuth steps (default 1800)")
    r.add_argument("--lidar-noise", type=float, help="LiDAR range noise sigma in meters")
    r.set_defaults(func=cmd_render)

    lo = sub.add_parser("losses", parents=[common], help="evaluate loss terms over a manifest")
    lo.add_argument("manifest", help="manifest.json or the directory holding it")
    lo.add_argument("--weights", help="YAML mapping of lambda_* weights")
    lo.add_argument("--cv-types", help="comma-separated cross-vehicle types, e.g. '0,1,2' or ''")
    lo.add_argument("--no-within-vehicle", action="store_true", help="drop within-vehicle spatial contexts")
    lo.add_argument("--families", help="comma-separated loss families to compute")
    lo.add_argument("--depth-scale", type=float, help="multiply every depth map by this factor")
    lo.add_argument("--motions", help="motion file overriding the manifest's")
    lo.set_defaults(func=cmd_losses)

    c = sub.add_parser("calibrate", parents=[common], help="register rear onto front LiDAR cloud")
    c.add_argument("front", help="front LiDAR cloud (ASCII PLY)")
    c.add_argument("rear", help="rear LiDAR cloud (ASCII PLY)")
    c.add_argument("--icp-config", help="YAML with gates, max_iterations, convergence_eps, initial_guess")
    c.add_argument("--init", help="initial rear->front guess: 16 row-major values or a file holding them")
    c.add_argument("--gates", help="comma-separated correspondence gates in meters")
    c.add_argument("--ground-truth", help="reference transform (16 values or calibration file) to report error")
    c.set_defaults(func=cmd_calibrate)

    v = sub.add_parser("verify", parents=[common], help="run a property suite")
    v.add_argument("suite", help="suite name or 'all'")
    v.add_argument("--tol", action="append", metavar="KEY=VAL", help="override a tolerance, e.g. icp.rotation_deg=0.5")
    v.add_argument("--option", action="append", metavar="KEY=VAL", help="suite option, e.g. icp_trials=20")
    v.set_defaults(func=cmd_verify)

    m = sub.add_parser("metrics", parents=[common], help="depth metrics of a prediction manifest")
    m.add_argument("pred", help="prediction manifest")
    m.add_argument("gt", help="ground-truth manifest")
    m.add_argument("--max-depth", type=float, help="evaluation cap in meters (default 100)")
    m.add_argument("--median-scale", action="store_true", help="per-map median scaling")
    m.set_defaults(func=cmd_metrics)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"articugeo {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, FormatError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"articugeo {args.command}: {msg}", file=sys.stderr)
        return EXIT_IO
    except (ArticugeoError, ValueError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"articugeo {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
