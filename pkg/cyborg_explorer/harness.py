"""Batch studies: trial fan-out, per-trial records and recomputable aggregates.

Every study builds a list of ``Job``s, runs them on a bounded worker pool and
folds the resulting ``TrialRecord``s into a ``MetricsSummary``. Aggregates are
always derived from the stored records, so a summary read back from disk can
be re-verified.
"""

from __future__ import annotations

import asyncio
import dataclasses
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .blob_detection import blob_in_hottest_region, detect_blob
from .config import ExplorerConfig, SourceSettings
from .engine import run_exploration_trial
from .errors import AggregateMismatchError, ConfigError, EmptySummaryError
from .imu import (
    DeadReckonResult,
    ErrorPoint,
    calibrate_from_reference,
    climb_pitch_profile,
    dead_reckon,
    error_series,
    read_imu_csv,
    read_reference_csv,
    reference_from_path,
    synth_gait,
    synth_walk,
    write_positions_csv,
)
from .ir_camera import render_ir, thermal_fraction
from .mission import MissionReport, MissionRunner
from .models import (
    CalibrationMode,
    Localization,
    MissionOutcome,
    NavOutcome,
    Pose,
    RunMode,
    SourceKind,
    Strategy,
    StudyKind,
    TrialRecord,
)
from .store import StudyStore
from .utils import mean_sd, to_jsonable
from .world import Arena, World, spawn_rngs, trial_seed

logger = logging.getLogger(__name__)

# Values reported alongside our aggregates; never asserted
PUBLISHED_REFERENCE: dict[StudyKind, dict] = {
    StudyKind.EXPLORATION: {
        "levy": {"search_time_min": 221.0},
        "fixed": {"final_coverage": 0.61},
        "levy-imu": {"final_coverage": 0.228, "final_coverage_sd": 0.055},
    },
    StudyKind.THERMAL_NAV: {
        "tracking": {
            "success_rate": 28 / 30,
            "nav_time_s": 111.5,
            "mean_speed_cm_s": 3.7,
            "arrival_distance_m": [2.5, 1.0],
            "overshoot_rate": 27 / 28,
            "phase3_by_second_rate": 27 / 28,
        },
        "onboard": {"success_rate": 1.0, "nav_time_s": 124.7, "mean_speed_cm_s": 5.0},
    },
    StudyKind.IMU_REPLAY: {
        "2d": {"final_error_pct": 5.0, "final_error_m": 1.0},
        "3d": {"final_error_pct": 10.0},
    },
    StudyKind.FULL_MISSION: {
        "outdoor": {"transient_reversions": 3, "detection_distance_m": 1.7},
    },
    StudyKind.BLOB_ACCURACY: {"working_range_m": 4.2, "fraction_at_range": 0.008},
}

# Minimum hit rate for a distance to count as inside the blob working range
ACCURACY_FLOOR = 0.9

# Error-series points kept per second of replay
SERIES_RATE = 1.0


# ── Study description ────────────────────────────────────────


@dataclass
class ExperimentSpec:
    kind: StudyKind
    config: ExplorerConfig
    trials: int = 1
    base_seed: int = 0
    out_dir: Path | None = None
    workers: int = 1
    config_path: Path | None = None

    def __post_init__(self) -> None:
        self.kind = StudyKind(self.kind)
        if self.trials < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if self.out_dir is not None:
            self.out_dir = Path(self.out_dir)

    @classmethod
    def from_config(cls, kind: StudyKind, config: ExplorerConfig,
                    config_path: Path | None = None, out_dir: Path | None = None) -> ExperimentSpec:
        study = config.study
        return cls(
            kind=kind,
            config=config,
            trials=study.trials,
            base_seed=study.base_seed,
            out_dir=out_dir if out_dir is not None else config.resolve_path(config.output.out_dir),
            workers=study.workers,
            config_path=config_path,
        )

    def seed_for(self, replicate: int) -> int:
        return trial_seed(self.base_seed, replicate)


@dataclass
class Job:
    """One trial to run; ``fn`` must be a module-level function so it pickles."""

    index: int
    seed: int
    label: str
    config: ExplorerConfig
    params: dict = field(default_factory=dict)
    fn: Callable[[Job], tuple[dict, dict]] | None = None


# ── Summary ──────────────────────────────────────────────────


def _normalized(record: TrialRecord) -> TrialRecord:
    return replace(record, metrics=to_jsonable(record.metrics), series=to_jsonable(record.series))


@dataclass
class MetricsSummary:
    kind: StudyKind
    records: list[TrialRecord]
    aggregates: dict = field(default_factory=dict)
    reference: dict = field(default_factory=dict)
    context: dict = field(default_factory=dict)

    @classmethod
    def build(cls, kind: StudyKind, records: list[TrialRecord], context: dict | None = None) -> MetricsSummary:
        kind = StudyKind(kind)
        # Aggregate the JSON-rounded values so a reloaded summary recomputes identically
        records = [_normalized(r) for r in sorted(records, key=lambda r: r.index)]
        context = to_jsonable(context or {})
        return cls(
            kind=kind,
            records=records,
            aggregates=to_jsonable(AGGREGATORS[kind](records, context)),
            reference=to_jsonable(PUBLISHED_REFERENCE.get(kind, {})),
            context=context,
        )

    @property
    def ok_records(self) -> list[TrialRecord]:
        return [r for r in self.records if r.status == "ok"]

    @property
    def labels(self) -> list[str]:
        return list(_by_label(self.records))

    def verify(self) -> MetricsSummary:
        recomputed = to_jsonable(AGGREGATORS[self.kind](self.records, self.context))
        if recomputed != to_jsonable(self.aggregates):
            raise AggregateMismatchError(f"{self.kind.value} aggregates do not match the trial records")
        return self

    def to_dict(self) -> dict:
        return to_jsonable({
            "kind": self.kind,
            "context": self.context,
            "aggregates": self.aggregates,
            "reference": self.reference,
            "records": [dataclasses.asdict(r) for r in self.records],
        })

    @classmethod
    def from_dict(cls, data: dict) -> MetricsSummary:
        if not data.get("records"):
            raise EmptySummaryError("summary has no trial records")
        return cls(
            kind=StudyKind(data["kind"]),
            records=[TrialRecord(**r) for r in data["records"]],
            aggregates=data.get("aggregates", {}),
            reference=data.get("reference", {}),
            context=data.get("context", {}),
        )


# ── Aggregation ──────────────────────────────────────────────


def _by_label(records: list[TrialRecord]) -> dict[str, list[TrialRecord]]:
    groups: dict[str, list[TrialRecord]] = {}
    for r in records:
        groups.setdefault(r.label, []).append(r)
    return groups


def _ok(group: list[TrialRecord]) -> list[TrialRecord]:
    return [r for r in group if r.status == "ok"]


def _stat(values) -> dict:
    vals = [float(v) for v in values if v is not None]
    mean, sd = mean_sd(vals)
    return {"mean": mean, "sd": sd, "n": len(vals)}


def _rate(flags) -> float | None:
    flags = [bool(f) for f in flags]
    return sum(flags) / len(flags) if flags else None


def _counts(group: list[TrialRecord]) -> dict:
    ok = _ok(group)
    return {"trials": len(group), "errors": len(group) - len(ok)}


def _curve(records: list[TrialRecord], x_key: str, y_key: str) -> dict | None:
    curves = [r.series[y_key] for r in records if y_key in r.series]
    if not curves:
        return None
    n = min(len(c) for c in curves)
    arr = np.asarray([c[:n] for c in curves], dtype=float)
    sd = arr.std(axis=0, ddof=1) if len(arr) > 1 else np.zeros(n)
    return {"x": records[0].series[x_key][:n], "mean": arr.mean(axis=0).tolist(), "sd": sd.tolist()}


def aggregate_exploration(records: list[TrialRecord], context: dict) -> dict:
    out = {}
    for label, group in _by_label(records).items():
        ok = _ok(group)
        entry = _counts(group)
        entry["final_coverage"] = _stat(r.metrics["final_coverage"] for r in ok)
        entry["distance_m"] = _stat(r.metrics.get("distance_m") for r in ok)
        if context.get("with_target"):
            entry["found_rate"] = _rate(r.metrics["found"] for r in ok)
            entry["search_time_min"] = _stat(r.metrics["search_time_min"] for r in ok)
        if any("imu_final_error_m" in r.metrics for r in ok):
            entry["imu_final_error_m"] = _stat(r.metrics.get("imu_final_error_m") for r in ok)
        curve = _curve(ok, "t_h", "coverage")
        if curve is not None:
            entry["coverage_curve"] = curve
        out[label] = entry
    return out


def _phase3_by(record: TrialRecord, arrival: int) -> bool:
    reached = record.metrics.get("phase3_arrival")
    return reached is not None and reached <= arrival


def aggregate_thermal_nav(records: list[TrialRecord], context: dict) -> dict:
    out = {}
    success = NavOutcome.SUCCESS.value
    for label, group in _by_label(records).items():
        ok = _ok(group)
        wins = [r for r in ok if r.metrics["outcome"] == success]
        arrivals = [r.series.get("arrival_distances_m") or [] for r in wins]
        depth = max((len(a) for a in arrivals), default=0)
        entry = _counts(group)
        entry.update({
            "success_rate": _rate(r.metrics["outcome"] == success for r in ok),
            "timeouts": sum(r.metrics["outcome"] == NavOutcome.TIMEOUT.value for r in ok),
            "nav_time_s": _stat(r.metrics["duration_s"] for r in wins),
            "mean_speed_cm_s": _stat(r.metrics["mean_speed_cm_s"] for r in ok),
            "estimates": _stat(r.metrics["estimates"] for r in wins),
            "arrival_distance_m": [_stat(a[i] for a in arrivals if len(a) > i) for i in range(depth)],
            "overshoot_rate": _rate(r.metrics["overshoot"] for r in wins),
            "phase3_by_second_rate": _rate(_phase3_by(r, 2) for r in wins),
            "overshoot_or_phase3_rate": _rate(r.metrics["overshoot"] or _phase3_by(r, 2) for r in wins),
        })
        out[label] = entry
    return out


def aggregate_mission(records: list[TrialRecord], context: dict) -> dict:
    out = {}
    for label, group in _by_label(records).items():
        ok = _ok(group)
        found = [r for r in ok if r.metrics["outcome"] == MissionOutcome.HUMAN_FOUND.value]
        entry = _counts(group)
        entry.update({
            "human_found_rate": _rate(r.metrics["outcome"] == MissionOutcome.HUMAN_FOUND.value for r in ok),
            "not_human_rate": _rate(r.metrics["outcome"] == MissionOutcome.NOT_HUMAN.value for r in ok),
            "not_found_rate": _rate(r.metrics["outcome"] == MissionOutcome.NOT_FOUND.value for r in ok),
            "false_human": sum(bool(r.metrics["false_human"]) for r in ok),
            "runs_with_give_up": sum(r.metrics["give_ups"] > 0 for r in ok),
            "give_ups": _stat(r.metrics["give_ups"] for r in ok),
            "time_to_human_s": _stat(r.metrics["duration_s"] for r in found),
            "coverage": _stat(r.metrics["coverage"] for r in ok),
        })
        out[label] = entry
    return out


def aggregate_imu(records: list[TrialRecord], context: dict) -> dict:
    out = {}
    for label, group in _by_label(records).items():
        ok = _ok(group)
        entry = _counts(group)
        for key in ("final_error_m", "final_error_pct", "traveled_m", "k_calibrated"):
            entry[key] = _stat(r.metrics.get(key) for r in ok)
        errors = [r.metrics["final_error_m"] for r in ok if r.metrics.get("final_error_m") is not None]
        pcts = [r.metrics["final_error_pct"] for r in ok if r.metrics.get("final_error_pct") is not None]
        entry["max_final_error_m"] = max(errors) if errors else None
        entry["max_final_error_pct"] = max(pcts) if pcts else None
        out[label] = entry
    return out


def aggregate_blob_accuracy(records: list[TrialRecord], context: dict) -> dict:
    table = []
    for label, group in _by_label(records).items():
        ok = _ok(group)
        if not ok:
            continue
        frames = sum(r.metrics["frames"] for r in ok)
        table.append({
            "label": label,
            "distance_m": ok[0].metrics["distance_m"],
            "frames": frames,
            "hit_rate": sum(r.metrics["hits"] for r in ok) / frames,
            "detection_rate": sum(r.metrics["detections"] for r in ok) / frames,
            "fraction": sum(r.metrics["fraction_mean"] * r.metrics["frames"] for r in ok) / frames,
        })
    table.sort(key=lambda row: row["distance_m"])

    working_range = fraction_at_range = None
    for row in table:
        if row["hit_rate"] < ACCURACY_FLOOR:
            break
        working_range, fraction_at_range = row["distance_m"], row["fraction"]

    trigger = None
    target = context.get("accuracy_distance")
    if table and target is not None:
        trigger = float(np.interp(target, [r["distance_m"] for r in table], [r["fraction"] for r in table]))
    return {
        "table": table,
        "working_range_m": working_range,
        "fraction_at_range": fraction_at_range,
        "fraction_at_accuracy_distance": trigger,
    }


AGGREGATORS: dict[StudyKind, Callable[[list[TrialRecord], dict], dict]] = {
    StudyKind.EXPLORATION: aggregate_exploration,
    StudyKind.THERMAL_NAV: aggregate_thermal_nav,
    StudyKind.FULL_MISSION: aggregate_mission,
    StudyKind.IMU_REPLAY: aggregate_imu,
    StudyKind.BLOB_ACCURACY: aggregate_blob_accuracy,
}


# ── Worker pool ──────────────────────────────────────────────


def _guarded(job: Job) -> TrialRecord:
    try:
        metrics, series = job.fn(job)
    except Exception as e:
        logger.error("Trial %d (%s, seed %d) failed: %s", job.index, job.label, job.seed, e)
        return TrialRecord(job.index, job.seed, job.label, status="error", error=f"{type(e).__name__}: {e}")
    return TrialRecord(job.index, job.seed, job.label, metrics=metrics, series=series)


async def _run_pool(
    jobs: list[Job],
    workers: int,
    on_result: Callable[[TrialRecord], None] | None = None,
) -> list[TrialRecord]:
    sem = asyncio.Semaphore(workers)
    loop = asyncio.get_running_loop()
    executor = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None
    records: list[TrialRecord] = []

    async def run_task(job: Job) -> None:
        async with sem:
            if executor is None:
                record = _guarded(job)
            else:
                record = await loop.run_in_executor(executor, _guarded, job)
            records.append(record)
            if on_result is not None:
                on_result(record)

    try:
        await asyncio.gather(*(run_task(j) for j in jobs))
    finally:
        if executor is not None:
            executor.shutdown()
    # Completion order depends on scheduling; the index order does not
    return sorted(records, key=lambda r: r.index)


def run_trials(
    jobs: list[Job],
    workers: int = 1,
    on_result: Callable[[TrialRecord], None] | None = None,
) -> list[TrialRecord]:
    return asyncio.run(_run_pool(list(jobs), workers, on_result))


# ── Trial functions ──────────────────────────────────────────


def _report_series(report: MissionReport) -> dict:
    data = report.to_dict()
    return {k: v for k, v in data.items() if k not in ("metrics", "seed", "mode")}


def exploration_trial(job: Job) -> tuple[dict, dict]:
    result = run_exploration_trial(job.config, job.params["strategy"], job.seed)
    series = {"t_h": [t / 3600.0 for t in result.checkpoint_times], "coverage": result.coverage}
    return result.metrics(), series


def imu_exploration_trial(job: Job) -> tuple[dict, dict]:
    """Phase I steered by the dead-reckoned pose; coverage is counted on the true path."""
    cfg = job.config
    config = replace(
        cfg,
        strategy=replace(cfg.strategy, name=Strategy(job.params["strategy"])),
        mission=replace(cfg.mission, localization=Localization.IMU, time_budget_s=cfg.study.duration_s),
    )
    report = MissionRunner(config, World.from_settings(config.world), job.seed, RunMode.EXPLORE_ONLY).run()
    metrics = {
        "final_coverage": report.coverage,
        "distance_m": report.path_length,
        "imu_final_error_m": report.imu_final_error,
    }
    return metrics, {"trajectory": _report_series(report)["trajectory"]}


def thermal_nav_trial(job: Job) -> tuple[dict, dict]:
    config = job.config
    report = MissionRunner(config, World.from_settings(config.world), job.seed, RunMode.THERMAL_NAV).run()
    metrics = report.metrics()
    metrics["success"] = report.outcome == NavOutcome.SUCCESS.value
    return metrics, _report_series(report)


def mission_trial(job: Job) -> tuple[dict, dict]:
    config = job.config
    report = MissionRunner(config, World.from_settings(config.world), job.seed, RunMode.MISSION).run()
    metrics = report.metrics()
    metrics["human_found"] = report.outcome == MissionOutcome.HUMAN_FOUND.value
    return metrics, _report_series(report)


def _error_metrics(points: list[ErrorPoint]) -> dict:
    if not points:
        return {"final_error_m": None, "final_error_pct": None, "traveled_m": 0.0}
    last = points[-1]
    return {"final_error_m": last.error, "final_error_pct": last.error_pct, "traveled_m": last.traveled}


def _error_series_dict(points: list[ErrorPoint]) -> dict:
    kept: list[ErrorPoint] = []
    for p in points:
        if not kept or p.t - kept[-1].t >= 1.0 / SERIES_RATE - 1e-9:
            kept.append(p)
    if points and kept[-1] is not points[-1]:
        kept.append(points[-1])
    return {
        "t": [p.t for p in kept],
        "traveled": [p.traveled for p in kept],
        "error": [p.error for p in kept],
        "error_pct": [p.error_pct for p in kept],
    }


def imu_bench_trial(job: Job) -> tuple[dict, dict]:
    """Synthetic walk, per-insect calibration against the reference, then dead reckoning."""
    imu = job.config.imu
    slope = float(job.params.get("slope", 0.0))
    walk_rng, gait_rng, ref_rng, k_rng = spawn_rngs(job.seed, 4)
    k_true = float(k_rng.uniform(*imu.k_true_range)) if imu.k_true_range else imu.k_true

    path = synth_walk(walk_rng, imu.bench_duration_s, imu.rate, slope)
    pitch_bias = None
    if slope > 0 and imu.climb_event_rate > 0:
        pitch_bias = climb_pitch_profile(path.t, walk_rng, imu.climb_event_rate, imu.climb_pitch_deg)
    trace = synth_gait(path, imu.gait_freq, k_true, gait_rng, imu.rate, imu.noise_sd, pitch_bias)
    reference = reference_from_path(path, imu.reference_rate, ref_rng, imu.reference_gap_fraction)

    k = calibrate_from_reference(trace, reference, imu.k_seed, imu.window_samples,
                                 float(path.t[0]), float(path.t[0]) + imu.calib_window_s, imu.calibration)
    result = dead_reckon(trace, k, imu.window_samples, start=path.pos[0], tolerance=imu.quat_tolerance)
    points = error_series(result.as_track(), reference)
    metrics = _error_metrics(points)
    metrics.update({"k_true": k_true, "k_calibrated": k, "slope_deg": slope})
    return metrics, _error_series_dict(points)


def _human_settings(config: ExplorerConfig) -> SourceSettings:
    for src in config.world.sources:
        if src.kind is SourceKind.HUMAN:
            return src
    return SourceSettings(kind=SourceKind.HUMAN)


def blob_accuracy_trial(job: Job) -> tuple[dict, dict]:
    """Noisy frames of a human at one distance and random bearings inside the FoV."""
    cfg = job.config
    cam = cfg.camera
    distance = float(job.params["distance"])
    frames = int(job.params["frames"])
    human = _human_settings(cfg)
    scene_rng, camera_rng = spawn_rngs(job.seed, 2)
    reach = distance + human.radius + 1.0
    arena = Arena(2.0 * reach, 2.0 * reach, (-reach, -reach))
    pose = Pose(0.0, 0.0, 0.0, 0.0)
    lo, hi = cfg.mission.phase2_band
    # Keep the whole body inside the view at the closest distance
    half = max(0.0, cam.h_fov / 2.0 - math.degrees(math.atan2(human.radius, distance)))

    hits = detections = 0
    fractions = []
    for _ in range(frames):
        bearing = math.radians(scene_rng.uniform(-half, half))
        source = SourceSettings(
            kind=SourceKind.HUMAN,
            center=[distance * math.cos(bearing), distance * math.sin(bearing)],
            radius=human.radius,
            surface_temp=human.surface_temp,
            height=human.height,
        ).to_source()
        frame = render_ir(World(arena, [source], cfg.world.ambient), pose, cam, camera_rng)
        blob = detect_blob(frame, cfg.blob, cam.noise_sd)
        detections += blob is not None
        hits += blob_in_hottest_region(blob, frame)
        fractions.append(thermal_fraction(frame, lo, hi))
    metrics = {
        "distance_m": distance,
        "frames": frames,
        "hits": hits,
        "detections": detections,
        "hit_rate": hits / frames,
        "fraction_mean": float(np.mean(fractions)),
    }
    return metrics, {}


# ── Studies ──────────────────────────────────────────────────


def _world_context(config: ExplorerConfig) -> dict:
    ws = config.world
    return {
        "arena": {"origin": ws.origin, "width": ws.width, "height": ws.height},
        "start": ws.start,
        "sources": [
            {"kind": s.kind, "name": s.name or s.kind.value, "center": s.center, "radius": s.radius}
            for s in ws.sources
        ],
        "arrival_radius": config.mission.arrival_radius,
    }


def _run_study(
    spec: ExperimentSpec,
    jobs: list[Job],
    context: dict,
    on_result: Callable[[TrialRecord], None] | None = None,
) -> MetricsSummary:
    logger.info("Running %s study: %d trial(s) on %d worker(s)", spec.kind.value, len(jobs), spec.workers)
    records = run_trials(jobs, spec.workers, on_result)
    failed = sum(r.status != "ok" for r in records)
    if failed:
        logger.warning("%d of %d trial(s) failed", failed, len(records))
    return MetricsSummary.build(spec.kind, records, context).verify()


def run_exploration_study(spec: ExperimentSpec, on_result=None) -> MetricsSummary:
    cfg = spec.config
    strategies = [Strategy(s) for s in cfg.study.strategies]
    imu_guided = cfg.mission.localization is Localization.IMU
    if imu_guided and Strategy.NATURAL in strategies:
        logger.warning("natural walk takes no destinations; skipped in IMU-guided exploration")
        strategies = [s for s in strategies if s is not Strategy.NATURAL]
    if not strategies:
        raise ConfigError("no strategy left to run")
    fn = imu_exploration_trial if imu_guided else exploration_trial
    suffix = "-imu" if imu_guided else ""
    jobs = [
        Job(s_i * spec.trials + i, spec.seed_for(i), f"{s.value}{suffix}", cfg, {"strategy": s}, fn)
        for s_i, s in enumerate(strategies)
        for i in range(spec.trials)
    ]
    context = _world_context(cfg)
    context.update({
        "duration_s": cfg.study.duration_s,
        "checkpoint_s": cfg.study.checkpoint_s,
        "with_target": bool(cfg.study.with_target and cfg.world.target is not None and not imu_guided),
        "target": cfg.world.target,
        "detection_radius": cfg.world.detection_radius,
        "localization": cfg.mission.localization,
    })
    return _run_study(spec, jobs, context, on_result)


def run_thermal_nav_study(spec: ExperimentSpec, on_result=None) -> MetricsSummary:
    cfg = spec.config
    if not cfg.world.sources:
        raise ConfigError("thermal navigation needs at least one source")
    label = cfg.mission.navigation.value
    jobs = [Job(i, spec.seed_for(i), label, cfg, {}, thermal_nav_trial) for i in range(spec.trials)]
    context = _world_context(cfg)
    context.update({"nav_time_limit_s": cfg.mission.nav_time_limit, "success_radius": cfg.mission.success_radius})
    return _run_study(spec, jobs, context, on_result)


def run_mission_study(spec: ExperimentSpec, on_result=None) -> MetricsSummary:
    cfg = spec.config
    label = cfg.mission.environment.value
    jobs = [Job(i, spec.seed_for(i), label, cfg, {}, mission_trial) for i in range(spec.trials)]
    context = _world_context(cfg)
    context.update({"time_budget_s": cfg.mission.time_budget_s, "localization": cfg.mission.localization})
    return _run_study(spec, jobs, context, on_result)


def run_imu_benchmark(spec: ExperimentSpec, on_result=None) -> MetricsSummary:
    cfg = spec.config
    variants = (("2d", 0.0), ("3d", cfg.imu.bench_slope))
    jobs = [
        Job(v_i * spec.trials + i, spec.seed_for(i), label, cfg, {"slope": slope}, imu_bench_trial)
        for v_i, (label, slope) in enumerate(variants)
        for i in range(spec.trials)
    ]
    context = {
        "duration_s": cfg.imu.bench_duration_s,
        "calib_window_s": cfg.imu.calib_window_s,
        "calibration": cfg.imu.calibration,
        "error_bands_pct": {"2d": 5.0, "3d": 10.0},
    }
    return _run_study(spec, jobs, context, on_result)


def run_blob_accuracy_study(spec: ExperimentSpec, on_result=None) -> MetricsSummary:
    cfg = spec.config
    distances = list(cfg.study.distances)
    jobs = [
        Job(d_i * spec.trials + i, spec.seed_for(d_i * spec.trials + i), f"{d:.1f}m", cfg,
            {"distance": d, "frames": cfg.study.frames_per_distance}, blob_accuracy_trial)
        for d_i, d in enumerate(distances)
        for i in range(spec.trials)
    ]
    context = {
        "accuracy_distance": cfg.study.accuracy_distance,
        "band": cfg.mission.phase2_band,
        "accuracy_floor": ACCURACY_FLOOR,
    }
    return _run_study(spec, jobs, context, on_result)


STUDIES: dict[StudyKind, Callable[..., MetricsSummary]] = {
    StudyKind.EXPLORATION: run_exploration_study,
    StudyKind.THERMAL_NAV: run_thermal_nav_study,
    StudyKind.FULL_MISSION: run_mission_study,
    StudyKind.IMU_REPLAY: run_imu_benchmark,
    StudyKind.BLOB_ACCURACY: run_blob_accuracy_study,
}


def run_study(spec: ExperimentSpec, on_result=None) -> MetricsSummary:
    return STUDIES[spec.kind](spec, on_result)


# ── Replay ───────────────────────────────────────────────────


@dataclass
class ReplayResult:
    k: float
    result: DeadReckonResult
    errors: list[ErrorPoint] = field(default_factory=list)
    recalibrated: bool = False

    def metrics(self) -> dict:
        metrics = _error_metrics(self.errors)
        metrics.update({
            "k_calibrated": self.k,
            "recalibrated": self.recalibrated,
            "samples": len(self.result.t),
            "renormalized_quaternions": self.result.renormalized,
            "imu_traveled_m": float(self.result.traveled[-1]) if len(self.result.traveled) else 0.0,
        })
        return metrics

    def summary(self) -> MetricsSummary:
        record = TrialRecord(0, 0, "replay", metrics=self.metrics(), series=_error_series_dict(self.errors))
        return MetricsSummary.build(StudyKind.IMU_REPLAY, [record], {"error_bands_pct": {"replay": 5.0}})


def run_imu_replay(
    input_csv: str | Path,
    reference_csv: str | Path | None = None,
    k: float | None = None,
    mode: CalibrationMode = CalibrationMode.CORRECTIVE,
    *,
    config: ExplorerConfig | None = None,
    recalibrate: bool = False,
    out_dir: str | Path | None = None,
) -> ReplayResult:
    """Dead-reckon a recorded IMU trace and score it against an optional reference track."""
    imu = (config or ExplorerConfig()).imu
    trace = read_imu_csv(Path(input_csv))
    reference = read_reference_csv(Path(reference_csv)) if reference_csv is not None else None
    gain = k if k is not None else imu.k_seed

    if recalibrate:
        if reference is None or not reference.valid.any():
            raise ConfigError("recalibration needs a reference track with at least two fixes")
        t0 = float(reference.t[reference.valid][0])
        gain = calibrate_from_reference(trace, reference, gain, imu.window_samples,
                                        t0, t0 + imu.calib_window_s, mode)
        logger.info("Recalibrated K = %.4f over the first %.0f s", gain, imu.calib_window_s)

    start = (0.0, 0.0, 0.0)
    if reference is not None and reference.valid.any():
        start = tuple(reference.pos[reference.valid][0])
    result = dead_reckon(trace, gain, imu.window_samples, start=start, tolerance=imu.quat_tolerance)
    errors = error_series(result.as_track(), reference) if reference is not None else []
    replay = ReplayResult(gain, result, errors, recalibrated=recalibrate)

    if out_dir is not None:
        store = StudyStore(out_dir).prepare()
        write_positions_csv(result, store.root / "positions.csv")
        store.write_csv("errors.csv", ("t", "traveled", "error", "error_pct"),
                        ([p.t, p.traveled, p.error, p.error_pct] for p in errors))
        store.write_summary(replay.summary().to_dict())
    return replay


# ── Output ───────────────────────────────────────────────────


def save_study(summary: MetricsSummary, spec: ExperimentSpec, plots: bool = True) -> list[Path]:
    """Write the study directory; returns the paths written."""
    from .visualize import emit_plots

    store = StudyStore(spec.out_dir or spec.config.resolve_path(spec.config.output.out_dir))
    paths = [store.write_config(spec.config)]
    paths.extend(store.write_trials(summary.records))
    paths.append(store.write_summary(summary.to_dict()))
    if summary.kind in (StudyKind.THERMAL_NAV, StudyKind.FULL_MISSION) and len(summary.records) == 1:
        record = summary.records[0]
        if record.status == "ok":
            paths.append(store.write_report({"metrics": record.metrics, **record.series}))
            paths.append(store.write_trajectory(record.series.get("trajectory", [])))
    if plots:
        paths.extend(emit_plots(summary, store.root))
    return paths


def _pct(value) -> str:
    return "   n/a" if value is None else f"{100.0 * value:5.1f}%"


def _ms(stat: dict, scale: float = 1.0, digits: int = 1) -> str:
    if not stat or stat.get("mean") is None:
        return "n/a"
    return f"{stat['mean'] * scale:.{digits}f} ± {stat['sd'] * scale:.{digits}f}"


def summary_lines(summary: MetricsSummary) -> list[str]:
    """Plain-text digest with the reference values side by side."""
    agg, ref = summary.aggregates, summary.reference
    lines: list[str] = []
    kind = summary.kind
    if kind is StudyKind.BLOB_ACCURACY:
        for row in agg["table"]:
            lines.append(f"{row['distance_m']:>4.1f} m  hit {_pct(row['hit_rate'])}  "
                         f"detect {_pct(row['detection_rate'])}  in-band {100.0 * row['fraction']:.2f}%")
        lines.append(f"working range {agg['working_range_m']} m "
                     f"(reference {ref.get('working_range_m')} m at {_pct(ref.get('fraction_at_range'))})")
        return lines

    for label, entry in agg.items():
        r = ref.get(label, {})
        if kind is StudyKind.EXPLORATION:
            line = f"{label:<10} coverage {_ms(entry['final_coverage'], 100.0)}%"
            if "found_rate" in entry:
                line += (f"  found {_pct(entry['found_rate'])}"
                         f"  search {_ms(entry['search_time_min'])} min")
            if "search_time_min" in r:
                line += f"  (reference {r['search_time_min']:.0f} min)"
            if "final_coverage" in r:
                line += f"  (reference {_pct(r['final_coverage'])})"
        elif kind is StudyKind.THERMAL_NAV:
            arrivals = ", ".join(_ms(s, digits=2) for s in entry["arrival_distance_m"][:3]) or "n/a"
            line = (f"{label:<10} success {_pct(entry['success_rate'])}"
                    f" (ref {_pct(r.get('success_rate'))})"
                    f"  time {_ms(entry['nav_time_s'])} s  speed {_ms(entry['mean_speed_cm_s'])} cm/s"
                    f" (ref {r.get('mean_speed_cm_s', 'n/a')})  arrivals [{arrivals}] m"
                    f"  overshoot/Phase III {_pct(entry['overshoot_or_phase3_rate'])}")
        elif kind is StudyKind.FULL_MISSION:
            line = (f"{label:<10} human found {_pct(entry['human_found_rate'])}"
                    f"  false human {entry['false_human']}"
                    f"  runs with give-up {entry['runs_with_give_up']}/{entry['trials'] - entry['errors']}"
                    f"  time {_ms(entry['time_to_human_s'])} s")
        else:
            peak = entry["max_final_error_pct"]
            line = (f"{label:<10} final error {_ms(entry['final_error_m'], digits=3)} m"
                    f" / {_ms(entry['final_error_pct'])}%"
                    f"  max {'n/a' if peak is None else f'{peak:.1f}%'}"
                    f"  traveled {_ms(entry['traveled_m'], digits=2)} m")
            if "final_error_pct" in r:
                line += f"  (reference {r['final_error_pct']:.0f}%)"
        lines.append(line)
    return lines
