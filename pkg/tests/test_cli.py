"""End-to-end command-line runs against a small scenario."""
import csv
import json
import textwrap

import pytest

from sivo.cli import main

_SCENARIO = textwrap.dedent("""\
    seed = 5

    [world]
    landmarks = 70
    bounds = [[-8.0, 8.0], [-3.0, 3.0], [-4.0, 22.0]]
    dynamic_fraction = 0.25

    [trajectory]
    shape = "straight"
    length_m = 10.0
    frames = 8

    [camera]
    fx = 500.0
    fy = 500.0
    cx = 320.0
    cy = 240.0
    baseline = 0.5

    [dropout]
    samples = 3

    [selection]
    strategies = ["all", "sivo-batch"]
    threshold_bits = 2.0

    [noise]
    pixel_sigma = 0.5
    process_sigma_translation = 0.02
    process_sigma_rotation = 0.001
""")


@pytest.fixture()
def scenario_path(tmp_path):
    path = tmp_path / "tiny.toml"
    path.write_text(_SCENARIO)
    return path


def _simulate(scenario_path, out, *extra):
    return main(["simulate", "--scenario", str(scenario_path),
                 "--out", str(out), *extra])


# ------------------------------------------------------------------ simulate


def test_simulate_writes_expected_layout(scenario_path, tmp_path, capsys):
    out = tmp_path / "runs"
    assert _simulate(scenario_path, out) == 0
    rundir = out / "BS3E2"  # 3 MC samples, 2-bit threshold
    for name in [
        "manifest.json", "trajectory_gt.txt", "trajectory.png",
        "all_trajectory.txt", "all_selection.csv", "all_selection.png",
        "sivo-batch_trajectory.txt", "sivo-batch_selection.csv",
        "sivo-batch_selection.png",
    ]:
        assert (rundir / name).exists(), name
    manifest = json.loads((rundir / "manifest.json").read_text())
    assert manifest["status"] == "complete"
    assert manifest["seed"] == 5
    assert manifest["strategies"] == ["all", "sivo-batch"]
    assert set(manifest["map_points"]) == {"all", "sivo-batch"}
    assert manifest["map_points"]["sivo-batch"] < manifest["map_points"]["all"]
    assert manifest["config"]["selection"]["threshold_bits"] == 2.0
    lines = capsys.readouterr().out.splitlines()
    assert any("map points" in line for line in lines)


def test_simulate_is_bitwise_repeatable(scenario_path, tmp_path):
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    assert _simulate(scenario_path, out_a) == 0
    assert _simulate(scenario_path, out_b) == 0
    for name in ["trajectory_gt.txt", "all_trajectory.txt",
                 "sivo-batch_trajectory.txt", "sivo-batch_selection.csv"]:
        assert (out_a / "BS3E2" / name).read_bytes() == \
            (out_b / "BS3E2" / name).read_bytes(), name


def test_simulate_strategy_alias_and_overrides(scenario_path, tmp_path):
    out = tmp_path / "runs"
    code = _simulate(scenario_path, out, "--strategy", "sivo",
                     "--threshold-bits", "1.5", "--mc-samples", "2",
                     "--seed", "9")
    assert code == 0
    rundir = out / "BS2E1.5"
    manifest = json.loads((rundir / "manifest.json").read_text())
    assert manifest["strategies"] == ["sivo-batch"]  # alias resolved
    assert manifest["seed"] == 9
    assert (rundir / "sivo-batch_trajectory.txt").exists()
    assert not (rundir / "all_trajectory.txt").exists()


def test_simulate_rejects_missing_scenario(tmp_path, capsys):
    assert _simulate(tmp_path / "nope.toml", tmp_path / "runs") == 1
    assert "bad scenario" in capsys.readouterr().err


def test_simulate_rejects_incomplete_scenario(tmp_path, capsys):
    path = tmp_path / "broken.toml"
    path.write_text("[world]\nlandmarks = 5\nbounds = [[0,1],[0,1],[0,1]]\n")
    assert _simulate(path, tmp_path / "runs") == 1
    assert "bad scenario" in capsys.readouterr().err


# ------------------------------------------------------------------ evaluate


@pytest.fixture()
def run_dir(scenario_path, tmp_path):
    out = tmp_path / "runs"
    assert _simulate(scenario_path, out) == 0
    return out / "BS3E2"


def test_evaluate_self_comparison_is_exact(run_dir, capsys):
    gt = run_dir / "trajectory_gt.txt"
    code = main(["evaluate", "--gt", str(gt), "--est", str(gt)])
    assert code == 0
    payload = json.loads(capsys.readouterr().out)
    # the 10 m path is shorter than every headline subsequence length, so
    # the averages are NaN; the skip list says why
    assert payload["skipped_lengths"] == [100, 200, 300, 400, 500, 600, 700, 800]
    assert payload["map_points_baseline"] is None


def test_evaluate_with_selection_reports(run_dir, tmp_path, capsys):
    out_file = tmp_path / "report.json"
    code = main([
        "evaluate",
        "--gt", str(run_dir / "trajectory_gt.txt"),
        "--est", str(run_dir / "sivo-batch_trajectory.txt"),
        "--baseline-report", str(run_dir / "all_selection.csv"),
        "--test-report", str(run_dir / "sivo-batch_selection.csv"),
        "--out", str(out_file),
    ])
    assert code == 0
    stdout = capsys.readouterr().out
    payload = json.loads(stdout)
    assert payload["map_points_baseline"] > payload["map_points_test"] > 0
    assert 0.0 < payload["map_reduction_percent"] < 100.0
    assert out_file.read_text() == stdout


def test_evaluate_requires_paired_reports(run_dir, capsys):
    gt = run_dir / "trajectory_gt.txt"
    code = main(["evaluate", "--gt", str(gt), "--est", str(gt),
                 "--baseline-report", str(run_dir / "all_selection.csv")])
    assert code == 1
    assert "come together" in capsys.readouterr().err


def test_evaluate_missing_file(run_dir, tmp_path, capsys):
    code = main(["evaluate", "--gt", str(run_dir / "trajectory_gt.txt"),
                 "--est", str(tmp_path / "absent.txt")])
    assert code == 1
    assert "error" in capsys.readouterr().err


# --------------------------------------------------------------------- sweep


def test_sweep_grid_and_summary(scenario_path, tmp_path, capsys):
    out = tmp_path / "sweep"
    code = main(["sweep", "--scenario", str(scenario_path),
                 "--thresholds", "1,3", "--samples", "3", "--out", str(out)])
    assert code == 0
    with open(out / "summary.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["label"] for r in rows] == ["ALL", "BS3E1", "BS3E3"]
    assert rows[0]["strategy"] == "all"
    assert rows[0]["map_reduction_percent"] == "0.0"
    assert all(r["status"] == "ok" for r in rows)
    # raising the threshold can only shrink the selected map
    assert int(rows[2]["map_points"]) <= int(rows[1]["map_points"])
    assert int(rows[1]["map_points"]) <= int(rows[0]["map_points"])
    reductions = [float(r["map_reduction_percent"]) for r in rows]
    assert reductions[0] <= reductions[1] <= reductions[2]
    assert (out / "sweep.png").exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"] == "complete"
    assert set(manifest["timings_s"]) == {"baseline", "BS3E1", "BS3E3"}
    assert "summary in" in capsys.readouterr().out


def test_sweep_rejects_empty_grid(scenario_path, tmp_path, capsys):
    code = main(["sweep", "--scenario", str(scenario_path),
                 "--thresholds", ",", "--samples", "3",
                 "--out", str(tmp_path / "s")])
    assert code == 1
    assert "non-empty" in capsys.readouterr().err


# ------------------------------------------------------------------- parsing


def test_unknown_strategy_is_a_usage_error(scenario_path, tmp_path):
    with pytest.raises(SystemExit):
        main(["simulate", "--scenario", str(scenario_path),
              "--strategy", "everything", "--out", str(tmp_path)])


def test_command_is_required():
    with pytest.raises(SystemExit):
        main([])
