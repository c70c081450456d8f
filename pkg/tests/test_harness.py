import json

import pytest

from cyborg_explorer.errors import AggregateMismatchError, ConfigError, EmptySummaryError
from cyborg_explorer.harness import (
    ExperimentSpec,
    Job,
    MetricsSummary,
    aggregate_blob_accuracy,
    run_imu_replay,
    run_study,
    run_trials,
    save_study,
    summary_lines,
)
from cyborg_explorer.imu import reference_from_path, synth_gait, synth_walk, write_imu_csv, write_track_csv
from cyborg_explorer.models import StudyKind, TrialRecord
from cyborg_explorer.store import read_summary
from cyborg_explorer.world import spawn_rngs

from .conftest import scenario


def _echo(job: Job) -> tuple[dict, dict]:
    return {"value": job.seed * 0.5, "found": True}, {"t": [0.0, 1.0]}


def _boom(job: Job) -> tuple[dict, dict]:
    raise RuntimeError("sensor unplugged")


def _record(index: int, label: str, **metrics) -> TrialRecord:
    return TrialRecord(index, index, label, metrics=metrics, series={})


def _blob_record(index: int, distance: float, hits: int, frames: int = 100, fraction: float = 0.02) -> TrialRecord:
    return _record(index, f"{distance:.1f}m", distance_m=distance, frames=frames, hits=hits,
                   detections=frames, fraction_mean=fraction)


# ── Spec and pool ────────────────────────────────────────────


def test_spec_rejects_empty_studies(config):
    with pytest.raises(ConfigError):
        ExperimentSpec(StudyKind.EXPLORATION, config, trials=0)
    with pytest.raises(ConfigError):
        ExperimentSpec(StudyKind.EXPLORATION, config, workers=0)


def test_trial_seeds_follow_the_base_seed(config):
    spec = ExperimentSpec(StudyKind.EXPLORATION, config, trials=3, base_seed=40)
    assert [spec.seed_for(i) for i in range(3)] == [40, 41, 42]


def test_failed_trials_become_error_records(config):
    jobs = [Job(0, 1, "a", config, fn=_echo), Job(1, 2, "a", config, fn=_boom), Job(2, 3, "a", config, fn=_echo)]
    seen = []
    records = run_trials(jobs, on_result=seen.append)
    assert [r.index for r in records] == [0, 1, 2]
    assert len(seen) == 3
    assert records[1].status == "error"
    assert records[1].error == "RuntimeError: sensor unplugged"
    assert records[2].metrics["value"] == 1.5


# ── Summary ──────────────────────────────────────────────────


def test_summary_round_trips_and_verifies():
    records = [_record(0, "levy", final_coverage=0.5, distance_m=10.0, found=True, search_time_min=30.0),
               _record(1, "levy", final_coverage=0.7, distance_m=12.0, found=False, search_time_min=None)]
    summary = MetricsSummary.build(StudyKind.EXPLORATION, records, {"with_target": True})
    entry = summary.aggregates["levy"]
    assert entry["final_coverage"]["mean"] == pytest.approx(0.6)
    assert entry["found_rate"] == 0.5
    again = MetricsSummary.from_dict(json.loads(json.dumps(summary.to_dict())))
    assert again.verify().aggregates == summary.aggregates


def test_tampered_aggregates_are_detected():
    summary = MetricsSummary.build(StudyKind.EXPLORATION, [_record(0, "fixed", final_coverage=0.4, distance_m=3.0)])
    data = summary.to_dict()
    data["aggregates"]["fixed"]["final_coverage"]["mean"] = 0.9
    with pytest.raises(AggregateMismatchError):
        MetricsSummary.from_dict(data).verify()


def test_summary_without_records_is_empty():
    with pytest.raises(EmptySummaryError):
        MetricsSummary.from_dict({"kind": "exploration", "records": []})


def test_working_range_is_the_last_distance_above_the_floor():
    records = [_blob_record(0, 0.6, 99), _blob_record(1, 1.2, 95, fraction=0.01),
               _blob_record(2, 1.8, 80), _blob_record(3, 2.4, 93)]
    agg = aggregate_blob_accuracy(records, {"accuracy_distance": 0.9})
    assert agg["working_range_m"] == 1.2
    assert agg["fraction_at_range"] == pytest.approx(0.01)
    assert agg["fraction_at_accuracy_distance"] == pytest.approx(0.015)
    assert [row["distance_m"] for row in agg["table"]] == [0.6, 1.2, 1.8, 2.4]


# ── Studies on disk ──────────────────────────────────────────


def _nav_spec(tmp_path, name: str) -> ExperimentSpec:
    cfg = scenario("thermal_nav")
    cfg.mission.nav_time_limit = 60.0
    return ExperimentSpec(StudyKind.THERMAL_NAV, cfg, trials=2, base_seed=5, out_dir=tmp_path / name)


def test_study_directory_layout(tmp_path):
    spec = _nav_spec(tmp_path, "nav")
    summary = run_study(spec)
    paths = save_study(summary, spec)
    root = tmp_path / "nav"
    assert (root / "config.yaml").exists()
    assert (root / "trials" / "trial_000.json").exists()
    assert (root / "trials" / "trial_001.json").exists()
    assert (root / "trajectories.svg") in paths
    assert read_summary(root)["kind"] == "thermal_nav"
    assert summary_lines(summary)


def test_single_trial_writes_a_report(tmp_path):
    spec = _nav_spec(tmp_path, "one")
    spec.trials = 1
    save_study(run_study(spec), spec, plots=False)
    assert (tmp_path / "one" / "report.json").exists()
    header = (tmp_path / "one" / "trajectory.csv").read_text().splitlines()[0]
    assert header == "t,x,y,yaw,phase"


def test_same_seed_gives_identical_artifacts(tmp_path):
    outputs = []
    for name in ("a", "b"):
        spec = _nav_spec(tmp_path, name)
        save_study(run_study(spec), spec)
        root = tmp_path / name
        outputs.append({p.relative_to(root).as_posix(): p.read_bytes()
                        for p in sorted(root.rglob("*")) if p.suffix in (".json", ".svg")})
    assert outputs[0].keys() == outputs[1].keys()
    assert "summary.json" in outputs[0]
    for key in outputs[0]:
        assert outputs[0][key] == outputs[1][key], key


def test_parallel_workers_match_a_serial_run(tmp_path):
    serial = _nav_spec(tmp_path, "serial")
    parallel = _nav_spec(tmp_path, "parallel")
    parallel.workers = 2
    assert run_study(serial).to_dict() == run_study(parallel).to_dict()


# ── Replay ───────────────────────────────────────────────────


def test_imu_replay_scores_against_the_reference(tmp_path):
    walk_rng, gait_rng, ref_rng = spawn_rngs(12, 3)
    path = synth_walk(walk_rng, 120.0)
    trace = synth_gait(path, 6.0, 4.0, gait_rng)
    imu_csv = write_imu_csv(trace, tmp_path / "imu.csv")
    ref_csv = write_track_csv(reference_from_path(path, 10.0, ref_rng, 0.05), tmp_path / "ref.csv")

    replay = run_imu_replay(imu_csv, ref_csv, recalibrate=True, out_dir=tmp_path / "replay")
    assert replay.recalibrated
    assert replay.k == pytest.approx(4.0, rel=0.05)
    assert replay.metrics()["final_error_pct"] <= 5.0
    for name in ("positions.csv", "errors.csv", "summary.json"):
        assert (tmp_path / "replay" / name).exists()


def test_replay_without_reference_only_dead_reckons(tmp_path):
    path = synth_walk(spawn_rngs(1, 1)[0], 10.0)
    imu_csv = write_imu_csv(synth_gait(path, 6.0, 3.5, spawn_rngs(2, 1)[0]), tmp_path / "imu.csv")
    replay = run_imu_replay(imu_csv)
    assert replay.errors == []
    assert replay.metrics()["imu_traveled_m"] > 0.0


def test_recalibration_needs_a_reference(tmp_path):
    path = synth_walk(spawn_rngs(1, 1)[0], 5.0)
    imu_csv = write_imu_csv(synth_gait(path, 6.0, 3.5, spawn_rngs(2, 1)[0]), tmp_path / "imu.csv")
    with pytest.raises(ConfigError):
        run_imu_replay(imu_csv, recalibrate=True)
