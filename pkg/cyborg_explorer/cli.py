"""CLI entry point and study orchestration."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from .blob_detection import blob_alpha, detect_blob, estimate_target
from .config import ExplorerConfig, load_config
from .errors import ExplorerError, ReplayParseError
from .harness import (
    ExperimentSpec,
    MetricsSummary,
    run_imu_replay,
    run_study,
    save_study,
    summary_lines,
)
from .ir_camera import band_count, load_frame, render_ir, thermal_fraction, write_frame_csv, write_frame_pgm
from .models import (
    CalibrationMode,
    Environment,
    Localization,
    NavigationVariant,
    Pose,
    Strategy,
    StudyKind,
    TrialRecord,
)
from .store import read_summary
from .utils import dumps_json, format_duration
from .visualize import emit_plots
from .world import World, make_rng

logger = logging.getLogger(__name__)

# ANSI color codes
_DIM = "\033[2m"
_BOLD = "\033[1m"
_GREEN = "\033[32m"
_RED = "\033[31m"
_CYAN = "\033[36m"
_RESET = "\033[0m"
_CLEAR_LINE = "\033[2K\r"


def _common_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--config", type=str, default="config.yaml",
        help="Path to a config or scenario YAML (default: ./config.yaml)",
    )
    common.add_argument("--seed", type=int, default=None, help="Override the base seed")
    common.add_argument("--trials", type=int, default=None, help="Override the number of trials")
    common.add_argument("--out", type=str, default=None, help="Output directory")
    common.add_argument("--workers", type=int, default=None, help="Override the number of worker processes")
    common.add_argument("--no-plots", action="store_true", help="Skip SVG charts")
    common.add_argument("--verbose", "-v", action="store_true", help="Enable verbose (DEBUG) logging")
    common.add_argument("--no-color", action="store_true", help="Disable colored output")
    return common


def parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    common = _common_flags()
    parser = argparse.ArgumentParser(
        prog="cyborg_explorer",
        description="Cyborg insect search simulator: exploration, thermal navigation and IMU localization",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("explore", parents=[common], help="Coverage and search-time study per strategy")
    p.add_argument("--strategy", action="append", choices=[s.value for s in Strategy],
                   help="Strategy to run (repeatable; default: all from the config)")
    p.add_argument("--localization", choices=[m.value for m in Localization], default=None,
                   help="Pose fed to the controller (imu: dead-reckoned)")
    p.add_argument("--hours", type=float, default=None, help="Simulated duration per trial in hours")
    p.add_argument("--no-target", action="store_true", help="Coverage only, without a search target")

    p = sub.add_parser("thermal-nav", parents=[common], help="Thermal-source navigation study")
    p.add_argument("--navigation", choices=[m.value for m in NavigationVariant], default=None)

    p = sub.add_parser("mission", parents=[common], help="Full three-phase search mission")
    p.add_argument("--environment", choices=[m.value for m in Environment], default=None)
    p.add_argument("--navigation", choices=[m.value for m in NavigationVariant], default=None)
    p.add_argument("--localization", choices=[m.value for m in Localization], default=None)
    p.add_argument("--budget", type=float, default=None, help="Time budget per run in seconds")

    p = sub.add_parser("imu-replay", parents=[common], help="Dead-reckon a recorded or synthetic IMU trace")
    p.add_argument("input", nargs="?", default=None, help="IMU CSV (t,ax,ay,az,qw,qx,qy,qz)")
    p.add_argument("--reference", type=str, default=None, help="Reference CSV (t,x,y[,z])")
    p.add_argument("--k", type=float, default=None, help="Gain factor K (default: imu.k_seed)")
    p.add_argument("--mode", choices=[m.value for m in CalibrationMode], default=None)
    p.add_argument("--recalibrate", action="store_true", help="Calibrate K over the initial window first")
    p.add_argument("--synthetic", action="store_true", help="Run the synthetic 2D/3D benchmark instead")

    p = sub.add_parser("render-ir", parents=[common], help="Render one synthetic IR frame")
    p.add_argument("--x", type=float, required=True)
    p.add_argument("--y", type=float, required=True)
    p.add_argument("--yaw", type=float, default=0.0)
    p.add_argument("--t", type=float, default=0.0, help="Simulated time (s) for transient sources")
    p.add_argument("--output", type=str, default="frame.csv", help="Frame file (.csv or .pgm)")

    p = sub.add_parser("blob-detect", parents=[common], help="Detect the thermal blob in a frame file")
    p.add_argument("frame", help="Frame file (.csv or .pgm)")
    p.add_argument("--x", type=float, default=None, help="Insect x for a target estimate")
    p.add_argument("--y", type=float, default=None, help="Insect y for a target estimate")
    p.add_argument("--yaw", type=float, default=None, help="Insect yaw for a target estimate")

    p = sub.add_parser("blob-accuracy", parents=[common], help="Blob accuracy and thermal information vs distance")
    p.add_argument("--frames", type=int, default=None, help="Frames per distance")

    p = sub.add_parser("plot", parents=[common], help="Re-render charts from a study directory")
    p.add_argument("study_dir", help="Directory holding summary.json")

    return parser.parse_args(argv)


def setup_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
        datefmt="%H:%M:%S",
    )
    logging.getLogger("matplotlib").setLevel(logging.WARNING)
    logging.getLogger("PIL").setLevel(logging.WARNING)
    logging.getLogger("asyncio").setLevel(logging.WARNING)


def _bar(current: int, total: int, width: int = 20) -> str:
    """Simple ASCII progress bar."""
    if total == 0:
        return "[" + " " * width + "]"
    filled = int(width * current / total)
    return "[" + "#" * filled + "-" * (width - filled) + "]"


def _headline(record: TrialRecord) -> str:
    m = record.metrics
    if "outcome" in m:
        return f"{m['outcome']:<12} {m['duration_s']:7.1f} s  {m['mean_speed_cm_s']:4.1f} cm/s"
    if "final_error_pct" in m and m["final_error_pct"] is not None:
        return f"error {m['final_error_m']:.3f} m ({m['final_error_pct']:.1f}%)  over {m['traveled_m']:.1f} m"
    if "hit_rate" in m:
        return f"{m['distance_m']:.1f} m  hit {100.0 * m['hit_rate']:5.1f}%  in-band {100.0 * m['fraction_mean']:.2f}%"
    line = f"coverage {100.0 * m.get('final_coverage', 0.0):5.1f}%"
    if m.get("search_time_min") is not None:
        line += f"  found after {m['search_time_min']:.1f} min"
    return line


class ProgressDisplay:
    """Progress line plus one result line per finished trial."""

    def __init__(self, total_tasks: int, use_color: bool = True):
        self.total = total_tasks
        self.completed = 0
        self.errors = 0
        self.start_time = time.monotonic()
        self.use_color = use_color

    def _c(self, code: str, text: str) -> str:
        if not self.use_color:
            return text
        return f"{code}{text}{_RESET}"

    def _status_line(self) -> str:
        elapsed = time.monotonic() - self.start_time
        rate = self.completed / elapsed if elapsed > 0 else 0
        eta = (self.total - self.completed) / rate if rate > 0 else 0
        pct = (self.completed / self.total * 100) if self.total > 0 else 0
        parts = [
            f"{_bar(self.completed, self.total)} {pct:>5.1f}%",
            f"{self.completed}/{self.total} done",
        ]
        if self.errors:
            parts.append(self._c(_RED, f"{self.errors} err"))
        parts.append(f"ETA {format_duration(eta)}")
        return "  ".join(parts)

    def print_result(self, record: TrialRecord) -> None:
        self.completed += 1
        if record.status == "ok":
            status = self._c(_GREEN, "OK")
            detail = _headline(record)
        else:
            self.errors += 1
            status = self._c(_RED, "ERROR")
            detail = self._c(_RED, record.error or "")
        sys.stdout.write(_CLEAR_LINE)
        print(
            f"  {self._c(_DIM, f'{self.completed:>4}.')} "
            f"{status:<8} "
            f"{self._c(_CYAN, f'{record.label:<10}')} "
            f"{self._c(_DIM, f'seed {record.seed:<6}')} "
            f"{detail}"
        )
        sys.stdout.write(self._status_line())
        sys.stdout.flush()

    def print_header(self, spec: ExperimentSpec) -> None:
        print()
        print(self._c(_BOLD, f"  CYBORG EXPLORER | {spec.kind.value.replace('_', ' ')} study"))
        print(self._c(_DIM, "  " + "=" * 60))
        print(f"  Trials: {self.total}  |  Base seed: {spec.base_seed}  |  Workers: {spec.workers}")
        if spec.config_path is not None:
            print(f"  Config: {spec.config_path}")
        print(self._c(_DIM, "  " + "-" * 60))
        print()

    def print_summary(self, summary: MetricsSummary, out_dir: Path | None) -> None:
        elapsed = time.monotonic() - self.start_time
        print()
        print()
        print(self._c(_BOLD, "  STUDY COMPLETE"))
        print(self._c(_DIM, "  " + "=" * 60))
        print(f"  Duration        {format_duration(elapsed)}")
        print(f"  Trials          {self.completed}/{self.total}"
              + (self._c(_RED, f" ({self.errors} errors)") if self.errors else self._c(_GREEN, " (0 errors)")))
        print()
        for line in summary_lines(summary):
            print(f"  {line}")
        if out_dir is not None:
            print()
            print(f"  Output          {out_dir}")
        print(self._c(_DIM, "  " + "=" * 60))


# ── Commands ─────────────────────────────────────────────────


def _load(args: argparse.Namespace) -> tuple[ExplorerConfig, Path]:
    config_path = Path(args.config).resolve()
    config = load_config(config_path)
    if args.seed is not None:
        config.study.base_seed = args.seed
    if args.trials is not None:
        config.study.trials = args.trials
    if args.workers is not None:
        config.study.workers = args.workers
    if args.no_plots:
        config.output.plots = False
    return config, config_path


def _out_dir(args: argparse.Namespace, config: ExplorerConfig) -> Path:
    if args.out:
        return Path(args.out)
    return config.resolve_path(config.output.out_dir) / args.command


def _planned(spec: ExperimentSpec) -> int:
    cfg = spec.config
    if spec.kind is StudyKind.EXPLORATION:
        strategies = {Strategy(s) for s in cfg.study.strategies}
        if cfg.mission.localization is Localization.IMU:
            strategies.discard(Strategy.NATURAL)
        return spec.trials * len(strategies)
    if spec.kind is StudyKind.IMU_REPLAY:
        return spec.trials * 2
    if spec.kind is StudyKind.BLOB_ACCURACY:
        return spec.trials * len(cfg.study.distances)
    return spec.trials


def _run_spec(args: argparse.Namespace, kind: StudyKind, config: ExplorerConfig, config_path: Path) -> int:
    config.validate()
    spec = ExperimentSpec.from_config(kind, config, config_path, _out_dir(args, config))
    progress = ProgressDisplay(_planned(spec), use_color=not args.no_color)
    progress.print_header(spec)
    summary = run_study(spec, on_result=progress.print_result)
    save_study(summary, spec, plots=config.output.plots)
    progress.print_summary(summary, spec.out_dir)
    return 0


def cmd_explore(args: argparse.Namespace) -> int:
    config, path = _load(args)
    if args.strategy:
        config.study.strategies = [Strategy(s) for s in args.strategy]
    if args.localization:
        config.mission.localization = Localization(args.localization)
    if args.hours is not None:
        config.study.duration_s = args.hours * 3600.0
    if args.no_target:
        config.study.with_target = False
    return _run_spec(args, StudyKind.EXPLORATION, config, path)


def cmd_thermal_nav(args: argparse.Namespace) -> int:
    config, path = _load(args)
    if args.navigation:
        config.mission.navigation = NavigationVariant(args.navigation)
    return _run_spec(args, StudyKind.THERMAL_NAV, config, path)


def cmd_mission(args: argparse.Namespace) -> int:
    config, path = _load(args)
    if args.environment:
        config.mission.environment = Environment(args.environment)
    if args.navigation:
        config.mission.navigation = NavigationVariant(args.navigation)
    if args.localization:
        config.mission.localization = Localization(args.localization)
    if args.budget is not None:
        config.mission.time_budget_s = args.budget
    return _run_spec(args, StudyKind.FULL_MISSION, config, path)


def cmd_blob_accuracy(args: argparse.Namespace) -> int:
    config, path = _load(args)
    if args.trials is None:
        config.study.trials = 1
    if args.frames is not None:
        config.study.frames_per_distance = args.frames
    return _run_spec(args, StudyKind.BLOB_ACCURACY, config, path)


def cmd_imu_replay(args: argparse.Namespace) -> int:
    config, path = _load(args)
    if args.mode:
        config.imu.calibration = CalibrationMode(args.mode)
    if args.synthetic:
        return _run_spec(args, StudyKind.IMU_REPLAY, config, path)
    if args.input is None:
        raise ExplorerError("imu-replay needs an input CSV or --synthetic")
    config.validate()
    out_dir = _out_dir(args, config)
    replay = run_imu_replay(
        args.input, args.reference, args.k, config.imu.calibration,
        config=config, recalibrate=args.recalibrate, out_dir=out_dir,
    )
    if config.output.plots and replay.errors:
        emit_plots(replay.summary(), out_dir)
    sys.stdout.write(dumps_json(replay.metrics()))
    return 0


def cmd_render_ir(args: argparse.Namespace) -> int:
    config, _ = _load(args)
    config.validate()
    world = World.from_settings(config.world)
    pose = Pose(args.x, args.y, 0.0, args.yaw)
    world.check_inside(pose)
    frame = render_ir(world, pose, config.camera, make_rng(config.study.base_seed), args.t)
    output = Path(args.output)
    if output.suffix.lower() == ".pgm":
        write_frame_pgm(frame, output)
    else:
        write_frame_csv(frame, output)
    lo, hi = config.mission.band
    sys.stdout.write(dumps_json({
        "frame": output,
        "in_band_pixels": band_count(frame, lo, hi),
        "thermal_fraction": thermal_fraction(frame, lo, hi),
        "max_temp": float(frame.temps.max()),
    }))
    return 0


def cmd_blob_detect(args: argparse.Namespace) -> int:
    config, _ = _load(args)
    cam = config.camera
    frame = load_frame(Path(args.frame), pixels=cam.pixels)
    blob = detect_blob(frame, config.blob, cam.noise_sd)
    lo, hi = config.mission.band
    result: dict = {"blob": None, "thermal_fraction": thermal_fraction(frame, lo, hi)}
    if blob is not None:
        alpha = blob_alpha(blob, cam)
        result["blob"] = {"u": blob.u, "v": blob.v, "scale": blob.scale, "response": blob.response, "alpha": alpha}
        if None not in (args.x, args.y, args.yaw):
            est = estimate_target(Pose(args.x, args.y, 0.0, args.yaw), alpha, config.mission.approach_step, cam.h_fov)
            result["estimate"] = {"x": est.x_t, "y": est.y_t, "upsilon": est.upsilon}
    sys.stdout.write(dumps_json(result))
    return 0


def cmd_plot(args: argparse.Namespace) -> int:
    summary = MetricsSummary.from_dict(read_summary(args.study_dir)).verify()
    out = Path(args.out) if args.out else Path(args.study_dir)
    for p in emit_plots(summary, out):
        print(p)
    return 0


COMMANDS = {
    "explore": cmd_explore,
    "thermal-nav": cmd_thermal_nav,
    "mission": cmd_mission,
    "imu-replay": cmd_imu_replay,
    "render-ir": cmd_render_ir,
    "blob-detect": cmd_blob_detect,
    "blob-accuracy": cmd_blob_accuracy,
    "plot": cmd_plot,
}


def _error_json(e: Exception) -> str:
    payload = {"error": type(e).__name__, "message": str(e)}
    if isinstance(e, ReplayParseError):
        payload["line"] = e.line
        payload["message"] = e.message
    return json.dumps(payload, sort_keys=True)


def main(argv: list[str] | None = None) -> int:
    args = parse_args(argv)
    setup_logging(args.verbose)
    try:
        return COMMANDS[args.command](args)
    except (ExplorerError, ValueError, OSError) as e:
        logger.debug("command failed", exc_info=True)
        print(_error_json(e), file=sys.stderr)
        return 1
