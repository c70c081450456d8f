import json

import pytest

from cyborg_explorer.cli import main, parse_args

from .conftest import SCENARIOS

INDOOR = str(SCENARIOS / "indoor.yaml")


def _stdout_json(capsys) -> dict:
    return json.loads(capsys.readouterr().out)


def test_subcommands_share_the_common_flags():
    args = parse_args(["explore", "--seed", "7", "--trials", "2", "--strategy", "levy", "--no-plots"])
    assert (args.command, args.seed, args.trials, args.strategy, args.no_plots) == ("explore", 7, 2, ["levy"], True)


def test_rendered_frame_feeds_the_detector(tmp_path, capsys):
    frame = tmp_path / "frame.csv"
    assert main(["render-ir", "--config", INDOOR, "--x", "4.2", "--y", "4.5", "--yaw", "90",
                 "--output", str(frame)]) == 0
    rendered = _stdout_json(capsys)
    assert rendered["in_band_pixels"] >= 50
    assert frame.exists()

    assert main(["blob-detect", str(frame), "--config", INDOOR, "--x", "4.2", "--y", "4.5", "--yaw", "90"]) == 0
    detected = _stdout_json(capsys)
    assert detected["blob"] is not None
    assert detected["estimate"]["upsilon"] == pytest.approx(90.0, abs=8.0)


def test_pgm_frames_are_accepted(tmp_path, capsys):
    frame = tmp_path / "frame.pgm"
    assert main(["render-ir", "--config", INDOOR, "--x", "4.2", "--y", "4.5", "--yaw", "90",
                 "--output", str(frame)]) == 0
    capsys.readouterr()
    assert main(["blob-detect", str(frame), "--config", INDOOR]) == 0
    assert _stdout_json(capsys)["blob"] is not None


def test_malformed_frame_reports_the_line(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    rows = [",".join(["25.0"] * 32) for _ in range(32)]
    rows[2] = "25.0,oops" + ",25.0" * 30
    bad.write_text("\n".join(rows) + "\n")
    assert main(["blob-detect", str(bad), "--config", INDOOR]) == 1
    error = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert error["error"] == "FrameFormatError"
    assert "line 3" in error["message"]


def test_malformed_imu_csv_reports_the_line(tmp_path, capsys):
    bad = tmp_path / "imu.csv"
    bad.write_text("t,ax,ay,az,qw,qx,qy,qz\n0.0,0,0,9.8,1,0,0,0\n0.01,0,0,9.8,1,0,0\n")
    assert main(["imu-replay", str(bad), "--config", INDOOR, "--out", str(tmp_path / "out")]) == 1
    error = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert error["error"] == "ReplayParseError"
    assert error["line"] == 3


def test_pose_outside_the_arena_fails(tmp_path, capsys):
    assert main(["render-ir", "--config", INDOOR, "--x", "9.0", "--y", "1.0",
                 "--output", str(tmp_path / "f.csv")]) == 1
    assert json.loads(capsys.readouterr().err.strip().splitlines()[-1])["error"] == "OutOfBoundsError"


def test_imu_replay_needs_an_input(capsys):
    assert main(["imu-replay", "--config", INDOOR]) == 1
    assert "needs an input" in capsys.readouterr().err


def test_plotting_an_empty_directory_fails(tmp_path, capsys):
    assert main(["plot", str(tmp_path), "--config", INDOOR]) == 1
    assert json.loads(capsys.readouterr().err.strip().splitlines()[-1])["error"] == "EmptySummaryError"


def test_short_exploration_study_runs(tmp_path, capsys):
    out = tmp_path / "explore"
    code = main(["explore", "--config", str(SCENARIOS / "imu_exploration.yaml"), "--strategy", "fixed",
                 "--localization", "truth", "--hours", "0.05", "--trials", "2", "--out", str(out), "--no-color"])
    assert code == 0
    assert (out / "summary.json").exists()
    assert (out / "coverage.svg").exists()
    summary = json.loads((out / "summary.json").read_text())
    assert summary["aggregates"]["fixed"]["trials"] == 2
