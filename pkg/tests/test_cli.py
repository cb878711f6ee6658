import json

import numpy as np
import pytest

from bimcloud.cli import main
from bimcloud.features import init_weights
from bimcloud.io import WeightsFile, read_ply, write_ply, write_weights
from bimcloud.core import PointCloud


@pytest.fixture
def room(tmp_path):
    path = tmp_path / "room.ply"
    assert main(["synth", "--output", str(path), "--points-per-face", "600", "--seed", "3",
                 "--truth", str(tmp_path / "truth.json")]) == 0
    return path


def test_synth_writes_cloud_and_truth(room, tmp_path):
    doc = read_ply(room)
    assert len(doc.cloud) == 6 * 600 + 600 + 180
    truth = json.loads((tmp_path / "truth.json").read_text())
    assert truth["kind"] == "ground_truth"


def test_clean_methods(room, tmp_path):
    for method in ("zscore", "statistical", "radius"):
        rep = tmp_path / f"{method}.json"
        assert main(["clean", "--input", str(room), "--output", str(tmp_path / f"{method}.ply"),
                     "--report", str(rep), "--method", method]) == 0
        d = json.loads(rep.read_text())
        assert d["method"] == method
        assert d["cleaning_portion_percent"] == d["removed_points"] / d["total_points"] * 100


def test_planes_outputs(room, tmp_path):
    rep = tmp_path / "p.json"
    out = tmp_path / "p.ply"
    assert main(["planes", "--input", str(room), "--output", str(out), "--report", str(rep),
                 "--min-inliers", "200", "--iterations", "300", "--seed", "1"]) == 0
    d = json.loads(rep.read_text())
    classes = [s["class"] for s in d["segments"]]
    assert classes.count("Floor") == 1 and classes.count("Ceiling") == 1
    assert d["ceiling_height"] == pytest.approx(2.7, abs=0.02)
    doc = read_ply(out)
    assert set(doc.property_names) >= {"segment", "class"}


def test_segment_with_weights_file(room, tmp_path):
    w = tmp_path / "w.bin"
    assert main(["weights", "--output", str(w), "--seed", "2"]) == 0
    rep = tmp_path / "s.json"
    assert main(["segment", "--input", str(room), "--report", str(rep), "--weights", str(w),
                 "--points-per-block", "256", "--max-rows", "300", "--folds", "3",
                 "--output", str(tmp_path / "s.ply")]) == 0
    d = json.loads(rep.read_text())
    assert d["rows"] == 300 and d["parameters"]["weights"] == "file"


@pytest.mark.parametrize("argv", [
    [],
    ["bogus"],
    ["clean"],
    ["planes", "--input", "x.ply", "--output", "y.ply", "--t", "-1"],
])
def test_usage_errors_exit_2(argv):
    assert main(argv) == 2


def test_invalid_values_exit_2(room, tmp_path):
    out = str(tmp_path / "o.ply")
    assert main(["clean", "--input", str(room), "--output", out, "--threshold", "-3"]) == 2
    assert main(["clean", "--input", str(room), "--output", out, "--axes", "xw"]) == 2
    assert main(["segment", "--input", str(room), "--report", str(tmp_path / "r.json"), "--folds", "1"]) == 2
    assert main(["synth", "--output", out, "--outliers", "1.5"]) == 2


def test_io_errors_exit_3(room, tmp_path):
    out = str(tmp_path / "o.ply")
    assert main(["clean", "--input", str(tmp_path / "missing.ply"), "--output", out]) == 3
    bad = tmp_path / "bad.ply"
    bad.write_bytes(b"ply\nformat binary_big_endian 1.0\nend_header\n")
    assert main(["clean", "--input", str(bad), "--output", out]) == 3
    wrong = tmp_path / "wrong.bin"
    write_weights(WeightsFile(init_weights(0).layers[:-1]), wrong)
    assert main(["segment", "--input", str(room), "--report", str(tmp_path / "r.json"),
                 "--weights", str(wrong)]) == 3


def test_algorithmic_failures_exit_4(tmp_path):
    flat = tmp_path / "flat.ply"
    pts = np.column_stack([np.arange(50.0), np.zeros(50), np.zeros(50)])
    write_ply(PointCloud(pts), flat)
    out = str(tmp_path / "o.ply")
    # y and z are constant, so every requested stage is skipped
    assert main(["clean", "--input", str(flat), "--output", out, "--axes", "yz", "--threshold", "3"]) == 4
    assert main(["planes", "--input", str(flat), "--output", out, "--min-inliers", "10"]) == 4
    unlabeled = tmp_path / "u.ply"
    write_ply(PointCloud(np.random.default_rng(0).normal(size=(300, 3))), unlabeled)
    assert main(["segment", "--input", str(unlabeled), "--report", str(tmp_path / "r.json")]) == 4


def test_config_file_and_override(room, tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[clean]\nmethod = zscore\nthreshold = 3\naxes = xyz\n")
    rep = tmp_path / "c.json"
    assert main(["clean", "--input", str(room), "--output", str(tmp_path / "c.ply"), "--report", str(rep),
                 "--config", str(cfg), "--axes", "xy"]) == 0
    d = json.loads(rep.read_text())
    assert d["parameters"]["axes"] == "xy" and d["parameters"]["threshold"] == 3.0
    cfg.write_text("[clean]\nsharpness = 2\n")
    assert main(["clean", "--input", str(room), "--output", str(tmp_path / "c.ply"),
                 "--config", str(cfg)]) == 2


def test_repeated_runs_are_byte_identical(room, tmp_path):
    reports = []
    for run in range(2):
        rep = tmp_path / f"planes{run}.json"
        ply = tmp_path / f"planes{run}.ply"
        assert main(["planes", "--input", str(room), "--output", str(ply), "--report", str(rep),
                     "--min-inliers", "200", "--iterations", "200", "--seed", "5",
                     "--workers", str(1 + 7 * run)]) == 0
        reports.append((rep.read_bytes(), ply.read_bytes()))
    assert reports[0] == reports[1]
