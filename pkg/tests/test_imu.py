import math

import numpy as np
import pytest

from cyborg_explorer.errors import ReplayParseError
from cyborg_explorer.harness import Job, imu_bench_trial
from cyborg_explorer.imu import (
    DeadReckonState,
    ImuTrace,
    ImuTracker,
    SpeedEstimator,
    Track,
    TruePath,
    calibrate_from_reference,
    calibrate_gain,
    dead_reckon,
    error_series,
    estimate_speed,
    heading_from_quat,
    integrate_position,
    quat_from_euler,
    read_imu_csv,
    read_reference_csv,
    reference_from_path,
    rolling_speed,
    synth_gait,
    synth_walk,
    write_imu_csv,
    write_track_csv,
    yaw_from_quat,
)
from cyborg_explorer.models import CalibrationMode
from cyborg_explorer.world import make_rng, spawn_rngs

from .conftest import scenario


def _straight_path(speed: float, duration: float = 60.0, rate: float = 100.0, yaw: float = 0.0) -> TruePath:
    t = np.arange(int(duration * rate) + 1) / rate
    heading = np.array([math.cos(math.radians(yaw)), math.sin(math.radians(yaw)), 0.0])
    pos = speed * t[:, None] * heading[None, :]
    return TruePath(t, pos, np.full(len(t), yaw), np.zeros(len(t)))


# ── Orientation ──────────────────────────────────────────────


def test_heading_follows_yaw_and_pitch():
    assert heading_from_quat(quat_from_euler(90.0)) == pytest.approx([0.0, 1.0, 0.0], abs=1e-12)
    hx, hy, hz = heading_from_quat(quat_from_euler(0.0, 30.0))
    assert hz == pytest.approx(0.5)
    assert hx == pytest.approx(math.sqrt(3.0) / 2.0)
    assert yaw_from_quat(quat_from_euler(-120.0)) == pytest.approx(-120.0)


# ── Speed estimation ─────────────────────────────────────────


def test_speed_estimate_ignores_constant_bias(rng):
    window = rng.normal(0.0, 0.1, (50, 3))
    est = SpeedEstimator(k=3.5)
    plain = estimate_speed(est, window)
    biased = estimate_speed(est, window + np.array([0.3, -9.81, 2.0]))
    assert biased == pytest.approx(plain, rel=1e-9)


def test_speed_estimator_warms_up():
    est = SpeedEstimator(k=3.5, window=0.5, rate=100.0)
    assert est.update([0.0, 0.0, 9.81]) == 0.0
    assert est.warming_up
    est.update([0.1, 0.0, 9.81])
    assert not est.warming_up
    assert est.window_samples == 50


@pytest.mark.parametrize("seed", range(20))
def test_constant_speed_is_recovered(seed):
    rng = make_rng(seed)
    speed = rng.uniform(0.03, 0.07)
    trace = synth_gait(_straight_path(speed), 6.0, 3.5, rng)
    estimate = rolling_speed(trace.acc, 3.5, 50)[100:]
    assert estimate.mean() == pytest.approx(speed, rel=0.05)


def test_streaming_tracker_matches_vectorized_replay():
    rng = make_rng(8)
    path = synth_walk(rng, 20.0)
    trace = synth_gait(path, 6.0, 3.5, rng)
    batch = dead_reckon(trace, 3.5, 50)
    tracker = ImuTracker(3.5, window=0.5, rate=100.0)
    state = tracker.feed_trace(trace)
    assert state.position == pytest.approx(batch.positions[-1], abs=1e-9)
    assert state.traveled == pytest.approx(batch.traveled[-1], abs=1e-9)


def test_gait_power_sits_below_ten_hertz(rng):
    acc = synth_gait(_straight_path(0.05), 6.0, 3.5, rng).acc
    power = np.abs(np.fft.rfft(acc - acc.mean(axis=0), axis=0)) ** 2
    freqs = np.fft.rfftfreq(len(acc), d=0.01)
    assert power[freqs < 10.0].sum() / power.sum() > 0.8


def test_gait_frequency_must_be_walking_range(rng):
    with pytest.raises(ValueError):
        synth_gait(_straight_path(0.05, duration=1.0), 12.0, 3.5, rng)


def test_non_unit_quaternions_are_renormalized(rng):
    trace = synth_gait(_straight_path(0.05, duration=5.0, yaw=45.0), 6.0, 3.5, rng)
    scaled = ImuTrace(trace.t, trace.acc, trace.quat * 1.01)
    unit = dead_reckon(trace, 3.5)
    fixed = dead_reckon(scaled, 3.5)
    assert fixed.renormalized == len(trace)
    assert unit.renormalized == 0
    assert np.allclose(fixed.positions, unit.positions)


# ── Dead reckoning and calibration ───────────────────────────


def test_straight_walk_is_reconstructed(rng):
    path = _straight_path(0.05, duration=60.0, yaw=90.0)
    result = dead_reckon(synth_gait(path, 6.0, 3.5, rng), 3.5)
    final = result.positions[-1]
    assert final[0] == pytest.approx(0.0, abs=0.01)
    assert final[1] == pytest.approx(3.0, rel=0.03)


@pytest.mark.parametrize("mode, expected", [
    (CalibrationMode.LITERAL, 12.0 / 10.0 * 3.5),
    (CalibrationMode.CORRECTIVE, 10.0 / 12.0 * 3.5),
])
def test_calibrate_gain(mode, expected):
    assert calibrate_gain(12.0, 10.0, 3.5, mode) == pytest.approx(expected)


def test_calibration_needs_positive_distances():
    with pytest.raises(ValueError):
        calibrate_gain(0.0, 10.0)


def test_corrective_calibration_is_idempotent():
    walk_rng, gait_rng = spawn_rngs(5, 2)
    path = synth_walk(walk_rng, 60.0)
    trace = synth_gait(path, 6.0, 4.2, gait_rng, noise_sd=0.0)
    reference = reference_from_path(path, 10.0)
    first = calibrate_from_reference(trace, reference, 3.5, 50, 0.0, 30.0)
    second = calibrate_from_reference(trace, reference, first, 50, 0.0, 30.0)
    assert first == pytest.approx(4.2, rel=0.05)
    assert abs(second - first) / first < 0.02


def test_error_series_skips_missing_fixes():
    estimated = Track([0.0, 1.0, 2.0, 3.0], [[0, 0, 0], [1, 0, 0], [2, 0, 0], [3, 0, 0]])
    reference = Track([0.0, 1.0, 2.0, 3.0], [[0, 0, 0], [np.nan] * 3, [2, 0.2, 0], [3, 0.3, 0]])
    points = error_series(estimated, reference)
    assert [p.t for p in points] == [0.0, 2.0, 3.0]
    assert points[-1].error == pytest.approx(0.3)
    assert points[0].error_pct == 0.0
    assert points[-1].traveled == pytest.approx(math.hypot(2, 0.2) + math.hypot(1, 0.1))


def test_reference_gaps_keep_the_endpoints():
    path = synth_walk(make_rng(2), 30.0)
    ref = reference_from_path(path, 10.0, make_rng(3), gap_fraction=0.5)
    assert len(ref.t) == 301
    assert ref.valid[0] and ref.valid[-1]
    assert 0 < np.count_nonzero(~ref.valid) < 300


def _bench_job(label: str, slope: float, seed: int) -> Job:
    return Job(seed, seed, label, scenario("imu_bench"), {"slope": slope}, imu_bench_trial)


@pytest.mark.parametrize("seed", range(20))
def test_flat_walk_drift_stays_within_five_percent(seed):
    metrics, series = imu_bench_trial(_bench_job("2d", 0.0, seed))
    assert metrics["traveled_m"] >= 10.0
    assert metrics["final_error_m"] < 1.0
    assert metrics["final_error_pct"] <= 5.0
    assert series["traveled"][-1] == pytest.approx(metrics["traveled_m"])


@pytest.mark.parametrize("seed", range(20))
def test_slope_walk_drift_stays_within_ten_percent(seed):
    metrics, _ = imu_bench_trial(_bench_job("3d", 7.9, seed))
    assert metrics["traveled_m"] >= 10.0
    assert metrics["final_error_pct"] <= 10.0
    assert metrics["k_calibrated"] == pytest.approx(metrics["k_true"], rel=0.1)


# ── CSV codecs ───────────────────────────────────────────────


def _imu_csv(tmp_path, rows: list[str]):
    path = tmp_path / "imu.csv"
    path.write_text("t,ax,ay,az,qw,qx,qy,qz\n" + "\n".join(rows) + "\n")
    return path


def test_imu_csv_reads_back(tmp_path, rng):
    trace = synth_gait(_straight_path(0.04, duration=2.0), 6.0, 3.5, rng)
    back = read_imu_csv(write_imu_csv(trace, tmp_path / "imu.csv"))
    assert len(back) == len(trace)
    assert np.allclose(back.acc, trace.acc, atol=1e-9)


def test_bad_number_reports_its_line(tmp_path):
    path = _imu_csv(tmp_path, ["0.00,0,0,9.8,1,0,0,0", "0.01,0,x,9.8,1,0,0,0"])
    with pytest.raises(ReplayParseError) as info:
        read_imu_csv(path)
    assert info.value.line == 3


def test_timestamps_must_increase(tmp_path):
    path = _imu_csv(tmp_path, ["0.00,0,0,9.8,1,0,0,0", "0.02,0,0,9.8,1,0,0,0", "0.01,0,0,9.8,1,0,0,0"])
    with pytest.raises(ReplayParseError) as info:
        read_imu_csv(path)
    assert info.value.line == 4


def test_missing_column_is_a_header_error(tmp_path):
    path = tmp_path / "imu.csv"
    path.write_text("t,ax,ay,az,qw,qx,qy\n0,0,0,0,1,0,0\n")
    with pytest.raises(ReplayParseError) as info:
        read_imu_csv(path)
    assert info.value.line == 1
    assert "qz" in info.value.message


def test_empty_reference_cells_become_gaps(tmp_path):
    path = tmp_path / "ref.csv"
    path.write_text("t,x,y\n0.0,0.0,0.0\n0.1,,\n0.2,0.01,0.0\n")
    track = read_reference_csv(path)
    assert track.valid.tolist() == [True, False, True]
    assert track.pos[2] == pytest.approx([0.01, 0.0, 0.0])


def test_track_csv_writes_gaps_as_empty_cells(tmp_path):
    track = Track([0.0, 0.1], [[0.0, 0.0, 0.0], [np.nan] * 3])
    back = read_reference_csv(write_track_csv(track, tmp_path / "ref.csv"))
    assert back.valid.tolist() == [True, False]
