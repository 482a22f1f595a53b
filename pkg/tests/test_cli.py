import subprocess
import sys

import numpy as np
import pytest

from articugeo import rasters
from articugeo.cli import EXIT_IO, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, main, read_calibration
from articugeo.geometry import SE3Transform, axis_angle, inverse
from articugeo.icp import PointCloud, write_ply
from articugeo.losses import read_report


@pytest.fixture(scope="module")
def ground_render(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "g1"
    scene = out.parent / "ground.yaml"
    scene.write_text("preset: ground\n")
    assert main(["render", "--scene", str(scene), "--frames", "1", "--out", str(out)]) == EXIT_OK
    return out


def test_render_writes_one_raster_per_camera(ground_render):
    frame = ground_render / "frame000"
    for ext in ("dpt", "img", "nrm"):
        assert len(list(frame.glob(f"C?.{ext}"))) == 10
    assert (ground_render / "manifest.json").is_file()
    assert rasters.read_depth(frame / "C5.dpt").shape == (192, 320)


def test_render_is_deterministic(tmp_path, ground_render):
    scene = ground_render.parent / "ground.yaml"
    again = tmp_path / "again"
    assert main(["render", "--scene", str(scene), "--frames", "1", "--out", str(again)]) == EXIT_OK
    for f in sorted(ground_render.rglob("*")):
        if f.is_file():
            twin = again / f.relative_to(ground_render)
            assert f.read_bytes() == twin.read_bytes(), f.name


def test_missing_rig_names_the_path(tmp_path, capsys):
    code = main(["render", "--rig", str(tmp_path / "nowhere.yaml"), "--frames", "1",
                 "--out", str(tmp_path / "r")])
    assert code == EXIT_IO
    assert "nowhere.yaml" in capsys.readouterr().err


def test_usage_errors_exit_one(capsys):
    assert main(["losses", "x", "--cv-types", "7"]) == EXIT_USAGE
    with pytest.raises(SystemExit) as exc:
        main(["teleport"])
    assert exc.value.code == EXIT_USAGE
    with pytest.raises(SystemExit) as exc:
        main(["metrics", "only-one"])
    assert exc.value.code == EXIT_USAGE


def test_cv_types_select_cross_vehicle_terms(tmp_path, island_two_frames):
    root = str(island_two_frames.root)
    none = tmp_path / "none.txt"
    some = tmp_path / "some.txt"
    assert main(["losses", root, "--families", "photo_S", "--cv-types", "", "--out", str(none)]) == EXIT_OK
    assert main(["losses", root, "--families", "photo_S", "--cv-types", "1,2", "--out", str(some)]) == EXIT_OK
    a, b = read_report(none), read_report(some)
    assert not any(k.startswith("photo_S_cv") for k in a)
    assert {"photo_S_cv1", "photo_S_cv2"} <= set(b) and "photo_S_cv0" not in b
    assert a["photo_S_wv"] == b["photo_S_wv"]


def test_depth_scale_moves_camera_height(tmp_path, island_two_frames):
    out = tmp_path / "ch.txt"
    assert main(["losses", str(island_two_frames.root), "--families", "ch", "--depth-scale", "2",
                 "--out", str(out)]) == EXIT_OK
    ch = read_report(out)["ch"][0]
    # doubled depths double the height, so the error equals the true height (1.45 to 1.65 m)
    assert 1.4 < ch < 1.7


def test_config_sections_and_flag_precedence(tmp_path, island_two_frames):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text("losses:\n  families: ch\n  depth_scale: 2\n  weights:\n    lambda_CH: 3\n")
    out = tmp_path / "r.txt"
    assert main(["losses", str(island_two_frames.root), "--config", str(cfg), "--out", str(out)]) == EXIT_OK
    rep = read_report(out)
    assert set(rep) == {"ch", "total"} and np.isclose(rep["total"][0], 3 * rep["ch"][0])
    assert main(["--config", str(cfg), "losses", str(island_two_frames.root), "--depth-scale", "1",
                 "--out", str(out)]) == EXIT_OK
    assert read_report(out)["ch"][0] < 1e-3
    cfg.write_text("losses:\n  weights:\n    lambda_Q: 1\n")
    assert main(["losses", str(island_two_frames.root), "--config", str(cfg)]) == EXIT_USAGE


def _box_cloud(rng):
    a = rng.uniform(-3, 3, size=(800, 2))
    return np.vstack([np.c_[a, np.zeros(800)], np.c_[a[:, 0], np.full(800, 3.0), a[:, 1] + 3],
                      np.c_[np.full(800, -3.0), a[:, 0], a[:, 1] + 3]])


def test_calibrate_identity_and_known_offset(tmp_path, rng, capsys):
    pts = _box_cloud(rng)
    write_ply(tmp_path / "front.ply", PointCloud(pts))
    write_ply(tmp_path / "same.ply", PointCloud(pts))
    out = tmp_path / "calib.txt"
    assert main(["calibrate", str(tmp_path / "front.ply"), str(tmp_path / "same.ply"),
                 "--out", str(out)]) == EXIT_OK
    T, rms, _ = read_calibration(out)
    assert T.allclose(SE3Transform(), atol=1e-6) and rms < 1e-6
    # rear = T^-1(front), so the rear->front answer is T
    T_true = SE3Transform(axis_angle([0, 0, 1], np.deg2rad(3.0)), [0.2, -0.1, 0.0])
    write_ply(tmp_path / "rear.ply", PointCloud(inverse(T_true).apply(pts)))
    gt = " ".join(str(x) for x in T_true.as_matrix().ravel())
    assert main(["calibrate", str(tmp_path / "front.ply"), str(tmp_path / "rear.ply"), "--out", str(out),
                 "--ground-truth", gt]) == EXIT_OK
    assert read_calibration(out)[0].allclose(T_true, atol=1e-3)
    assert "error" in capsys.readouterr().err


def test_calibrate_failures(tmp_path):
    write_ply(tmp_path / "empty.ply", PointCloud(np.zeros((0, 3))))
    write_ply(tmp_path / "one.ply", PointCloud(np.ones((5, 3))))
    assert main(["calibrate", str(tmp_path / "one.ply"), str(tmp_path / "empty.ply")]) == EXIT_NUMERIC
    assert main(["calibrate", str(tmp_path / "missing.ply"), str(tmp_path / "one.ply")]) == EXIT_IO
    assert main(["calibrate", str(tmp_path / "one.ply"), str(tmp_path / "one.ply"),
                 "--init", "1 2 3"]) == EXIT_USAGE


def test_verify_exit_codes(tmp_path):
    out = tmp_path / "v.txt"
    assert main(["verify", "closure", "--option", "closure_states=50", "--out", str(out)]) == EXIT_OK
    assert out.read_text().strip().endswith("checks passed")
    assert main(["verify", "astrology"]) == EXIT_USAGE
    assert main(["verify", "metrics", "--tol", "metrics.abs_rel=-1"]) == EXIT_NUMERIC
    assert main(["verify", "metrics", "--tol", "metrics.nope=1"]) == EXIT_USAGE


def test_metrics_identity_alignment_and_median(tmp_path, island_two_frames, ground_render, capsys):
    out = tmp_path / "m.txt"
    root = str(island_two_frames.root)
    assert main(["metrics", root, root, "--out", str(out)]) == EXIT_OK
    text = out.read_text()
    assert "abs_rel 0\n" in text and "delta1 1\n" in text
    assert main(["metrics", str(ground_render), root]) == EXIT_IO
    assert "misaligned" in capsys.readouterr().err
    assert main(["metrics", root, root, "--median-scale", "--max-depth", "30"]) == EXIT_OK
    assert main(["metrics", root, root, "--max-depth", "-1"]) == EXIT_USAGE


def test_console_entry_point_runs_as_module():
    res = subprocess.run([sys.executable, "-m", "articugeo", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and "articugeo" in res.stdout
    res = subprocess.run([sys.executable, "-m", "articugeo", "verify", "pose"], capture_output=True, text=True)
    assert res.returncode == 0 and "checks passed" in res.stdout
