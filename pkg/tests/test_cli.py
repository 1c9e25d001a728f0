import json
import struct

import numpy as np
import pytest

from cvloc.cli import run
from cvloc.geometry.camera import BevGrid
from cvloc.geometry.se2 import Se2Pose, pose_to_json
from cvloc.manifest import MANIFEST_NAME
from cvloc.solver import MatchSet, save_matches_csv
from cvloc.tensor.feature_map import FeatureMap
from cvloc.tensor.io import save_feature_map


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "small.yaml"
    path.write_text(
        "runtime:\n  log_level: WARNING\n"
        "flow:\n  iters: 1\n"
        "synth:\n  grid_size: 16\n  translation_px: 2.0\n  trials: 3\n"
    )
    return path


def stdout_json(capsys):
    return json.loads(capsys.readouterr().out)


def test_solve_identity_matches(tmp_path, capsys):
    src = np.array([[0.0, 0.0], [4.0, 1.0], [2.0, 5.0], [7.0, 3.0]])
    path = tmp_path / "m.csv"
    save_matches_csv(MatchSet(src, src, np.ones(4)), path)
    assert run(["solve", "--matches", str(path), "--out-dir", str(tmp_path / "out")]) == 0
    data = stdout_json(capsys)
    assert data["theta_rad"] == pytest.approx(0.0, abs=1e-12)
    assert data["tu_px"] == pytest.approx(0.0, abs=1e-12)
    assert data["mpp"] == 1.0
    assert json.loads((tmp_path / "out" / "pose.json").read_text()) == data
    manifest = json.loads((tmp_path / "out" / MANIFEST_NAME).read_text())
    assert manifest["command"] == "solve"
    assert manifest["outputs"] == {"pose": "pose.json"}


def test_gtflow_then_solve_recovers_the_pose(tmp_path, capsys):
    grid = BevGrid.centered(12, 0.5, 1.65)
    (tmp_path / "grid.json").write_text(grid.to_file().model_dump_json())
    pose = Se2Pose(0.3, 4.0, -2.5)
    (tmp_path / "pose.json").write_text(json.dumps(pose_to_json(pose)))

    assert run(["gtflow", "--pose", str(tmp_path / "pose.json"), "--grid", str(tmp_path / "grid.json"),
                "--out-dir", str(tmp_path)]) == 0
    capsys.readouterr()
    assert run(["solve", "--flow", str(tmp_path / "gt.cvfl"), "--grid", str(tmp_path / "grid.json")]) == 0
    data = stdout_json(capsys)
    assert data["theta_rad"] == pytest.approx(0.3, abs=1e-5)
    assert data["tu_px"] == pytest.approx(4.0, abs=1e-4)
    assert data["tv_px"] == pytest.approx(-2.5, abs=1e-4)
    assert data["mpp"] == 0.5


def test_usage_errors_exit_1(tmp_path, capsys):
    assert run(["solve"]) == 1
    assert run(["solve", "--no-such-flag"]) == 1
    assert "--no-such-flag" in capsys.readouterr().err
    assert run(["eval"]) == 1
    assert run(["no-such-command"]) == 1
    assert run(["gradcheck", "--n", "many"]) == 1
    assert run(["flow", "--bev", "a", "--sat", "b", "--operator", "gru", "--out-dir", str(tmp_path)]) == 1


def test_data_errors_exit_2(tmp_path):
    assert run(["solve", "--matches", str(tmp_path / "missing.csv")]) == 2
    bad = tmp_path / "bad.csv"
    bad.write_text("px,py,qx,qy,s\n1,2,3\n")
    assert run(["solve", "--matches", str(bad)]) == 2

    corrupt = tmp_path / "w.cvwt"
    corrupt.write_bytes(b"CVWT" + struct.pack("<HIH", 1, 1, 1) + b"w" + struct.pack("<B4I", 4, *(0xFFFFFFFF,) * 4))
    save_feature_map(FeatureMap(np.ones((4, 4, 1))), tmp_path / "bev.cvfm")
    assert run(["refine", "--bev", str(tmp_path / "bev.cvfm"), "--weights", str(corrupt), "--out-dir", str(tmp_path / "r")]) == 2


def test_degenerate_solve_exits_3(tmp_path):
    path = tmp_path / "m.csv"
    save_matches_csv(MatchSet(np.ones((3, 2)), np.ones((3, 2)), np.zeros(3)), path)
    assert run(["solve", "--matches", str(path)]) == 3


def test_gradcheck_command(tmp_path, capsys):
    assert run(["gradcheck", "--n", "3", "--points", "8", "--out-dir", str(tmp_path)]) == 0
    data = stdout_json(capsys)
    assert data["passed"] is True and data["sets"] == 3
    manifest = json.loads((tmp_path / MANIFEST_NAME).read_text())
    assert manifest["seed"] == 0
    assert run(["gradcheck", "--points", "2"]) == 1


def test_synth_bench_is_reproducible(tmp_path, small_config, capsys):
    outs = []
    for name, workers in (("a", "1"), ("b", "2")):
        out = tmp_path / name
        code = run(["--config", str(small_config), "synth-bench", "--seed", "5", "--workers", workers, "--out-dir", str(out)])
        assert code == 0
        outs.append(out)
    capsys.readouterr()
    for fname in ("metrics.json", "gt_poses.csv", "pred_poses.csv"):
        assert (outs[0] / fname).read_bytes() == (outs[1] / fname).read_bytes()
    metrics = json.loads((outs[0] / "metrics.json").read_text())
    assert metrics["trials"] == 3 and metrics["failures"] == 0
    manifest = json.loads((outs[0] / MANIFEST_NAME).read_text())
    assert manifest["seed"] == 5
    assert manifest["options"]["synth"]["grid_size"] == 16


def test_synth_bench_rotation_sweep(tmp_path, small_config, capsys):
    out = tmp_path / "sweep"
    argv = ["--config", str(small_config), "synth-bench", "--rotation-deg", "0", "--rotation-deg", "5", "--out-dir", str(out)]
    assert run(argv) == 0
    data = stdout_json(capsys)
    assert [p["rotation_deg"] for p in data["sweep"]] == [0.0, 5.0]
    assert all(p["trials"] == 3 for p in data["sweep"])
    assert json.loads((out / "sweep.json").read_text()) == data
    manifest = json.loads((out / MANIFEST_NAME).read_text())
    assert manifest["options"]["rotation_deg"] == [0.0, 5.0]
    assert not (out / "metrics.json").exists()

    assert run(["--config", str(small_config), "synth-bench", "--rotation-deg=-3"]) == 1


def test_eval_command(tmp_path, capsys):
    gt = tmp_path / "gt.csv"
    pred = tmp_path / "pred.csv"
    gt.write_text("id,theta_rad,tu_px,tv_px\na,0,0,0\nb,0,10,10\n")
    pred.write_text("id,theta_rad,tu_px,tv_px\na,0,3,4\nb,0.01,10,10\n")
    assert run(["eval", "--pred", str(pred), "--gt", str(gt), "--mpp", "0.5"]) == 0
    data = stdout_json(capsys)
    assert data["count"] == 2
    assert data["median_location"] == pytest.approx(1.25)
    assert data["recall_location"]["5"] == 100.0


def test_bad_config_exits_1(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("flow:\n  operator: nearest\n")
    assert run(["--config", str(path), "gradcheck", "--n", "1"]) == 1


@pytest.mark.parametrize(
    "argv",
    [
        ["flow", "--bev", "a", "--sat", "b", "--iters", "0", "--out-dir", "o"],
        ["synth-bench", "--workers", "0"],
        ["synth-bench", "--trials", "0"],
        ["project", "--features", "f", "--camera", "c", "--preset", "kitti", "--stride", "0", "--out-dir", "o"],
    ],
)
def test_zero_counts_are_rejected_not_defaulted(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert run(argv) == 1
    assert not (tmp_path / "o").exists()
