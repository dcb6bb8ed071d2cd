import csv
import filecmp
import json
import subprocess
import sys

import pytest

from rolo import io
from rolo.cli import TIMING_COLUMNS, main


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("data") / "box"
    assert main(["synth", "--preset", "box", "--seed", "1", "--set", "n_scans=6", "--out", str(root)]) == 0
    return root


def test_slam_happy_path(dataset, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("max_source_points = 3000\nloop_closure = false\n")
    out, timing, pcd = tmp_path / "traj.tum", tmp_path / "timing.csv", tmp_path / "map.pcd"
    code = main(["slam", "--input", str(dataset), "--config", str(cfg), "--out", str(out),
                 "--timing", str(timing), "--map", str(pcd)])
    assert code == 0
    recs = io.read_poses(out, "tum")
    assert len(recs) == 6
    with open(timing) as fh:
        rows = list(csv.DictReader(fh))
    assert tuple(rows[0]) == TIMING_COLUMNS and len(rows) == 6
    assert "POINTS" in pcd.read_text()

    report = tmp_path / "eval.json"
    assert main(["eval", "--input", str(out), "--reference", str(dataset / "groundtruth.tum"),
                 "--out", str(report)]) == 0
    summary = json.loads(report.read_text())
    assert summary["pairs"] == 6 and summary["rmse_translation_m"] < 0.1


def test_odom_kitti_output(dataset, tmp_path):
    out = tmp_path / "traj.kitti"
    assert main(["odom", "--input", str(dataset), "--set", "max_source_points=3000", "--format", "kitti",
                 "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 6


def test_missing_input_is_data_error(tmp_path, capsys):
    assert main(["slam", "--input", str(tmp_path / "missing"), "--out", str(tmp_path / "t.tum")]) == 3
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and err[0].startswith("rolo: data error:")


def test_config_error(dataset, tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("resolution = -1\n")
    assert main(["odom", "--input", str(dataset), "--config", str(cfg)]) == 2
    assert capsys.readouterr().err.startswith("rolo: config error:")
    assert main(["odom", "--input", str(dataset), "--set", "nonsense=1"]) == 2


def test_unknown_preset(tmp_path):
    assert main(["synth", "--preset", "moon", "--out", str(tmp_path / "x")]) == 2


def test_synth_deterministic(tmp_path):
    # a shortened square loop; the full 400-scan preset takes over a minute per run
    dirs = []
    for name in ("a", "b"):
        d = tmp_path / name
        assert main(["synth", "--preset", "square-loop", "--seed", "7", "--set", "n_scans=20", "--out", str(d)]) == 0
        dirs.append(d)
    cmp = filecmp.dircmp(dirs[0], dirs[1])
    assert not cmp.diff_files and not cmp.left_only and not cmp.right_only
    assert not filecmp.dircmp(dirs[0] / "velodyne", dirs[1] / "velodyne").diff_files
    assert len(list((dirs[0] / "velodyne").glob("*.bin"))) == 20


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "rolo.cli", "eval", "--input", str(tmp_path / "none.tum"),
                           "--reference", str(tmp_path / "none.tum")], capture_output=True, text=True)
    assert proc.returncode == 3 and proc.stderr.startswith("rolo: data error:")
