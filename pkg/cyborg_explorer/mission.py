"""Three-phase search mission: stochastic exploration, thermal-source approach, classification.

The phase functions are pure controllers over a ``Mission`` record: they read
a pose (and, once per camera period, a frame) and return the stimulus for the
next tick. ``MissionRunner`` owns the world, the RNG streams and the tick loop.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .blob_detection import blob_alpha, detect_blob, estimate_target
from .config import BlobSettings, CameraModel, ExplorerConfig, MissionConfig, StrategyParams
from .explore import next_destination, wall_redirect
from .imu import GaitSynthesizer, ImuTracker
from .ir_camera import IrImage, band_count, center_window_count, render_ir
from .locomotion import WalkState, apply_stimulus, goto_point
from .models import (
    BlobResult,
    Classification,
    Destination,
    Environment,
    Localization,
    MissionOutcome,
    NavigationVariant,
    NavOutcome,
    Phase,
    PhaseEvent,
    Pose,
    RecaptureStage,
    RunMode,
    SourceKind,
    StimCommand,
    TargetEstimate,
)
from .utils import angle_difference, normalize_angle, to_jsonable
from .world import World, spawn_rngs

logger = logging.getLogger(__name__)

_TURNS = (StimCommand.TURN_LEFT, StimCommand.TURN_RIGHT)
# Yaw error (deg) below which a recapture turn counts as done
_TURN_TOLERANCE = 1.0


# ── Criteria ─────────────────────────────────────────────────


def pixels_for_fraction(fraction: float, total: int = 1024) -> int:
    """Pixel count a thermal-information fraction stands for (0.8% of 1024 -> 8)."""
    return int(round(fraction * total))


def phase2_criterion(count: int, center_count: int, config: MissionConfig) -> bool:
    if config.environment is Environment.OUTDOOR:
        return count >= config.outdoor_total and center_count >= config.outdoor_center
    return count >= config.phase2_trigger


def phase3_criterion(count: int, center_count: int, config: MissionConfig) -> bool:
    if config.environment is Environment.OUTDOOR:
        scale = config.outdoor_phase3_scale
        return (count >= math.ceil(config.outdoor_total * scale)
                and center_count >= math.ceil(config.outdoor_center * scale))
    return count >= config.phase3_trigger


def u_band_command(u: int, config: MissionConfig) -> StimCommand:
    """Onboard steering rule: left band turns left, middle accelerates, right turns right."""
    if config.u_left[0] <= u <= config.u_left[1]:
        return StimCommand.TURN_LEFT
    if config.u_accel[0] <= u <= config.u_accel[1]:
        return StimCommand.ACCELERATE
    if config.u_right[0] <= u <= config.u_right[1]:
        return StimCommand.TURN_RIGHT
    raise ValueError(f"column {u} outside the u-bands")


class FrameView:
    """Thermal measures of one frame under the mission's band, computed on demand."""

    def __init__(self, frame: IrImage, config: MissionConfig,
                 blob: BlobSettings | None = None, noise_sd: float = 0.3):
        self.frame = frame
        self.config = config
        self.blob_settings = blob or BlobSettings()
        self.noise_sd = noise_sd
        self.lo, self.hi = config.band

    @cached_property
    def count(self) -> int:
        return band_count(self.frame, self.lo, self.hi)

    @property
    def fraction(self) -> float:
        return self.count / self.frame.temps.size

    @cached_property
    def blob(self) -> BlobResult | None:
        frame = self.frame
        if self.config.mask_out_of_band:
            temps = frame.temps
            in_band = (temps >= self.lo) & (temps <= self.hi)
            frame = IrImage(np.where(in_band, temps, float(np.median(temps))), frame.timestamp)
        return detect_blob(frame, self.blob_settings, self.noise_sd)

    @cached_property
    def center_count(self) -> int:
        if self.blob is None:
            return 0
        return center_window_count(self.frame, (self.blob.u, self.blob.v), self.lo, self.hi)

    @property
    def qualifies(self) -> bool:
        """Enough thermal information to estimate from, and a blob to estimate with."""
        return self.fraction > self.config.estimate_fraction and self.blob is not None

    def _gate(self, criterion) -> bool:
        # Cheap pixel count first; the blob is only needed once the count passes
        if not criterion(self.count, self.frame.temps.size, self.config):
            return False
        return self.blob is not None and criterion(self.count, self.center_count, self.config)

    def phase2_ready(self) -> bool:
        return self._gate(phase2_criterion)

    def phase3_ready(self) -> bool:
        return self._gate(phase3_criterion)


def phase3_classify(
    frame: IrImage,
    config: MissionConfig,
    blob: BlobSettings | None = None,
    noise_sd: float = 0.3,
) -> Classification:
    """Threshold surrogate for the human classifier."""
    view = FrameView(frame, config, blob, noise_sd)
    if config.environment is Environment.OUTDOOR:
        human = view.phase3_ready()
    else:
        human = view.count >= config.phase3_trigger
    return Classification.HUMAN if human else Classification.NOT_HUMAN


# ── Mission state ────────────────────────────────────────────


@dataclass
class RecaptureState:
    last_alpha: float
    capture_yaw: float
    fov: float = 90.0
    sweep_deg: float = 90.0
    stage: RecaptureStage = RecaptureStage.BACK_TURN
    origin_yaw: float | None = None
    yaw_accumulated: float = 0.0
    failed_reacquisitions: int = 0

    @property
    def target_bearing(self) -> float:
        """World bearing at which the blob was last seen."""
        return normalize_angle(self.capture_yaw - self.fov / 2.0 + self.last_alpha)

    def turn_budget(self, yaw: float) -> float:
        """Degrees left in the current stage before its limit is reached."""
        if self.stage is RecaptureStage.BACK_TURN:
            return abs(angle_difference(self.target_bearing, yaw))
        if self.stage is RecaptureStage.EXHAUSTED or self.origin_yaw is None:
            return 0.0
        offset = angle_difference(yaw, self.origin_yaw)
        self.yaw_accumulated = offset
        assert abs(offset) <= self.sweep_deg + 1e-6, f"sweep exceeded its budget: {offset:.3f} deg"
        if self.stage is RecaptureStage.SWEEP_RIGHT:
            return max(0.0, self.sweep_deg + offset)
        return max(0.0, self.sweep_deg - offset)


@dataclass
class RecaptureStep:
    command: StimCommand | None
    max_turn: float | None = None
    give_up: bool = False
    reacquired: bool = False


@dataclass
class TickResult:
    """Stimulus for the next tick; ``command=None`` holds the insect still."""

    command: StimCommand | None
    transition: Phase | None = None
    reason: str = ""
    max_turn: float | None = None
    give_up: bool = False


@dataclass
class Mission:
    config: MissionConfig = field(default_factory=MissionConfig)
    camera: CameraModel = field(default_factory=CameraModel)
    blob: BlobSettings = field(default_factory=BlobSettings)
    strategy: StrategyParams = field(default_factory=StrategyParams)
    rng: np.random.Generator | None = None
    phase: Phase = Phase.EXPLORE
    classify_enabled: bool = True
    now: float = 0.0
    frame_index: int = -1
    destination: Destination | None = None
    last_alpha: float | None = None
    capture_yaw: float | None = None
    misses: int = 0
    recapture: RecaptureState | None = None
    pulse: StimCommand | None = None
    pulse_until: float = 0.0
    approach_started: float = 0.0
    estimate: TargetEstimate | None = None
    estimates: list[TargetEstimate] = field(default_factory=list)
    shuttle_legs: int = 0
    arrivals: list[tuple[float, float]] = field(default_factory=list)
    phase3_arrival: int | None = None
    classification: Classification | None = None
    classified_blob: BlobResult | None = None
    events: list[PhaseEvent] = field(default_factory=list)
    give_ups: int = 0

    def view(self, frame: IrImage) -> FrameView:
        return FrameView(frame, self.config, self.blob, self.camera.noise_sd)

    def transition(self, to: Phase, reason: str) -> None:
        logger.debug("t=%.1f %s -> %s (%s)", self.now, self.phase.value, to.value, reason)
        self.events.append(PhaseEvent(self.now, self.phase, to, reason, self.frame_index))
        self.phase = to
        self.destination = None
        self.pulse = None
        self.recapture = None
        self.misses = 0
        if to is Phase.APPROACH:
            self.approach_started = self.now
            self.estimate = None
            self.shuttle_legs = 0
        elif to is Phase.EXPLORE:
            # The detection that led into Approach is discarded
            self.last_alpha = None
            self.capture_yaw = None
            self.estimate = None


def _give_up(mission: Mission, reason: str) -> TickResult:
    mission.give_ups += 1
    mission.transition(Phase.EXPLORE, reason)
    return TickResult(None, Phase.EXPLORE, reason, give_up=True)


def _remember_blob(mission: Mission, blob: BlobResult, yaw: float) -> None:
    mission.last_alpha = blob_alpha(blob, mission.camera)
    mission.capture_yaw = yaw


def _approach_timed_out(mission: Mission) -> bool:
    return mission.now - mission.approach_started >= mission.config.approach_timeout - 1e-9


# ── Phase I ──────────────────────────────────────────────────


def phase1_tick(mission: Mission, pose: Pose, world: World, frame: IrImage | None = None) -> TickResult:
    """Lévy exploration toward the current destination; switch to Approach on a thermal trigger."""
    if mission.phase is not Phase.EXPLORE:
        raise ValueError(f"phase1_tick called in phase {mission.phase.value}")
    if frame is not None:
        view = mission.view(frame)
        if view.phase2_ready():
            _remember_blob(mission, view.blob, pose.yaw)
            reason = f"{view.count} px in band"
            mission.transition(Phase.APPROACH, reason)
            return TickResult(None, Phase.APPROACH, reason)

    params = mission.strategy
    if mission.destination is None:
        mission.destination = next_destination(params, pose, world.arena, mission.rng)
    if not mission.destination.interim:
        redirect = wall_redirect(pose, world.arena, params.wall_margin, params.redirect_len)
        if redirect is not None:
            mission.destination = redirect
    cmd = goto_point(pose, mission.destination.target, params.theta_t, params.d_t)
    if cmd is StimCommand.ARRIVED:
        mission.destination = next_destination(params, pose, world.arena, mission.rng)
        cmd = goto_point(pose, mission.destination.target, params.theta_t, params.d_t)
        if cmd is StimCommand.ARRIVED:
            mission.destination = None
            return TickResult(None, reason="degenerate destination")
    return TickResult(cmd)


# ── Phase II, onboard variant ────────────────────────────────


def recapture(
    rec: RecaptureState,
    yaw: float,
    frame: IrImage | None = None,
    *,
    config: MissionConfig | None = None,
    blob: BlobSettings | None = None,
    noise_sd: float = 0.3,
) -> RecaptureStep:
    """One frame of the search for a lost source.

    Turn back toward where the blob was last seen, then sweep right up to
    ``sweep_deg`` from there, then left up to ``sweep_deg``; after that give up.
    """
    if frame is not None and FrameView(frame, config or MissionConfig(), blob, noise_sd).qualifies:
        logger.debug("source reacquired after %d failed frames", rec.failed_reacquisitions)
        return RecaptureStep(None, reacquired=True)
    rec.failed_reacquisitions += 1

    if rec.stage is RecaptureStage.BACK_TURN:
        error = angle_difference(rec.target_bearing, yaw)
        if abs(error) > _TURN_TOLERANCE:
            cmd = StimCommand.TURN_LEFT if error > 0 else StimCommand.TURN_RIGHT
            return RecaptureStep(cmd, max_turn=abs(error))
        rec.stage = RecaptureStage.SWEEP_RIGHT
        rec.origin_yaw = yaw
        logger.debug("recapture: sweeping right from %.1f deg", yaw)

    if rec.stage is RecaptureStage.SWEEP_RIGHT:
        remaining = rec.turn_budget(yaw)
        if remaining > _TURN_TOLERANCE:
            return RecaptureStep(StimCommand.TURN_RIGHT, max_turn=remaining)
        rec.stage = RecaptureStage.SWEEP_LEFT
        logger.debug("recapture: right sweep exhausted, sweeping left")

    if rec.stage is RecaptureStage.SWEEP_LEFT:
        remaining = rec.turn_budget(yaw)
        if remaining > _TURN_TOLERANCE:
            return RecaptureStep(StimCommand.TURN_LEFT, max_turn=remaining)
        rec.stage = RecaptureStage.EXHAUSTED

    return RecaptureStep(None, give_up=True)


def _start_pulse(mission: Mission, cmd: StimCommand, max_turn: float | None = None) -> TickResult:
    if cmd in _TURNS:
        mission.pulse = cmd
        mission.pulse_until = mission.now + mission.config.turn_pulse_s
        return TickResult(cmd, max_turn=max_turn)
    mission.pulse = None
    return TickResult(cmd)


def _between_frames(mission: Mission, pose: Pose) -> TickResult:
    if mission.pulse is not None and mission.now < mission.pulse_until - 1e-9:
        max_turn = mission.recapture.turn_budget(pose.yaw) if mission.recapture else None
        if max_turn is None or max_turn > 0:
            return TickResult(mission.pulse, max_turn=max_turn)
    mission.pulse = None
    if mission.recapture is not None:
        return TickResult(None)
    return TickResult(StimCommand.ACCELERATE)


def phase2_onboard_tick(mission: Mission, imu_pose: Pose, frame: IrImage | None = None) -> TickResult:
    """Steer by the blob column; recapture with the IMU yaw when the blob is lost."""
    if mission.phase is not Phase.APPROACH:
        raise ValueError(f"phase2_onboard_tick called in phase {mission.phase.value}")
    if _approach_timed_out(mission):
        return _give_up(mission, "approach timeout")
    if frame is None:
        return _between_frames(mission, imu_pose)

    cfg = mission.config
    view = mission.view(frame)
    if view.qualifies:
        if view.phase3_ready():
            if mission.phase3_arrival is None:
                mission.phase3_arrival = len(mission.arrivals)
            if mission.classify_enabled:
                reason = f"{view.count} px in band"
                mission.transition(Phase.CLASSIFY, reason)
                return TickResult(None, Phase.CLASSIFY, reason)
        if mission.recapture is not None:
            logger.debug("t=%.1f source reacquired during %s", mission.now, mission.recapture.stage.value)
            mission.recapture = None
        mission.misses = 0
        _remember_blob(mission, view.blob, imu_pose.yaw)
        return _start_pulse(mission, u_band_command(view.blob.u, cfg))

    mission.misses += 1
    if mission.recapture is None:
        if mission.misses < cfg.max_misses or mission.last_alpha is None:
            mission.pulse = None
            return TickResult(StimCommand.ACCELERATE)
        mission.recapture = RecaptureState(
            last_alpha=mission.last_alpha,
            capture_yaw=mission.capture_yaw,
            fov=mission.camera.h_fov,
            sweep_deg=cfg.sweep_deg,
        )
        logger.debug("t=%.1f blob lost for %d frames, recapturing toward %.1f deg",
                     mission.now, mission.misses, mission.recapture.target_bearing)
    step = recapture(mission.recapture, imu_pose.yaw)
    if step.give_up:
        return _give_up(mission, "recapture exhausted")
    return _start_pulse(mission, step.command, step.max_turn)


# ── Phase II, tracking variant ───────────────────────────────


def _shuttle_leg(mission: Mission, pose: Pose) -> Destination:
    """Next leg between the last estimate and the auxiliary point ΔL behind it."""
    est = mission.estimate
    mission.shuttle_legs += 1
    rad = math.radians(est.upsilon)
    if mission.shuttle_legs % 2 == 1:
        target = (est.x_t - mission.config.aux_step * math.cos(rad),
                  est.y_t - mission.config.aux_step * math.sin(rad))
    else:
        target = (est.x_t, est.y_t)
    logger.debug("t=%.1f shuttle leg %d toward (%.2f, %.2f)", mission.now, mission.shuttle_legs, *target)
    return Destination(target=target, origin_pose=pose, direction=est.upsilon,
                       distance=mission.config.aux_step, interim=True)


def phase2_tracking_tick(mission: Mission, pose: Pose, frame: IrImage | None = None) -> TickResult:
    """Walk to successive target estimates using an externally tracked pose."""
    if mission.phase is not Phase.APPROACH:
        raise ValueError(f"phase2_tracking_tick called in phase {mission.phase.value}")
    if _approach_timed_out(mission):
        return _give_up(mission, "approach timeout")
    cfg = mission.config

    if frame is not None:
        view = mission.view(frame)
        if view.phase3_ready():
            if mission.phase3_arrival is None:
                mission.phase3_arrival = len(mission.arrivals)
            if mission.classify_enabled:
                reason = f"{view.count} px in band"
                mission.transition(Phase.CLASSIFY, reason)
                return TickResult(None, Phase.CLASSIFY, reason)
        if mission.destination is None:
            if view.qualifies:
                alpha = blob_alpha(view.blob, mission.camera)
                est = estimate_target(pose, alpha, cfg.approach_step, mission.camera.h_fov)
                mission.estimate = est
                mission.estimates.append(est)
                mission.shuttle_legs = 0
                mission.destination = Destination(target=(est.x_t, est.y_t), origin_pose=pose,
                                                  direction=est.upsilon, distance=est.step)
                logger.debug("t=%.1f estimate %d at (%.2f, %.2f), alpha %.1f",
                             mission.now, len(mission.estimates), est.x_t, est.y_t, alpha)
            elif mission.estimate is not None:
                if mission.shuttle_legs >= cfg.max_shuttle_legs:
                    return _give_up(mission, "shuttle exhausted")
                mission.destination = _shuttle_leg(mission, pose)

    dest = mission.destination
    if dest is None:
        return TickResult(None)
    radius = cfg.aux_step / 2.0 if dest.interim else cfg.arrival_radius
    cmd = goto_point(pose, dest.target, mission.strategy.theta_t, radius)
    if cmd is StimCommand.ARRIVED:
        if not dest.interim:
            mission.arrivals.append(pose.xy)
        mission.destination = None
        return TickResult(None, reason="arrived")
    return TickResult(cmd)


# ── Phase III ────────────────────────────────────────────────


def classify_tick(mission: Mission, frame: IrImage | None = None) -> TickResult:
    if mission.phase is not Phase.CLASSIFY:
        raise ValueError(f"classify_tick called in phase {mission.phase.value}")
    if frame is None or mission.classification is not None:
        return TickResult(None)
    mission.classification = phase3_classify(frame, mission.config, mission.blob, mission.camera.noise_sd)
    mission.classified_blob = mission.view(frame).blob
    logger.debug("t=%.1f classified %s", mission.now, mission.classification.value)
    return TickResult(None, reason=mission.classification.value)


# ── Runner ───────────────────────────────────────────────────


@dataclass
class MissionReport:
    seed: int
    mode: RunMode
    outcome: str
    duration: float
    classification: Classification | None = None
    events: list[PhaseEvent] = field(default_factory=list)
    trajectory: list[tuple[float, float, float, float, str]] = field(default_factory=list)
    transition_frames: dict[int, list[list[float]]] = field(default_factory=dict)
    estimates: list[TargetEstimate] = field(default_factory=list)
    arrival_distances: list[float] = field(default_factory=list)
    overshoot: bool = False
    phase3_arrival: int | None = None
    give_ups: int = 0
    path_length: float = 0.0
    coverage: float = 0.0
    false_human: bool = False
    imu_final_error: float | None = None
    start: tuple[float, float] = (0.0, 0.0)
    polyline_stride: int = 10

    @property
    def mean_speed(self) -> float:
        return self.path_length / self.duration if self.duration > 0 else 0.0

    def phase_durations(self) -> dict[str, float]:
        totals = {p.value: 0.0 for p in Phase}
        t_prev = 0.0
        phase = self.events[0].phase_from if self.events else self._initial_phase()
        for ev in self.events:
            totals[phase.value] += ev.t - t_prev
            t_prev, phase = ev.t, ev.phase_to
        totals[phase.value] += self.duration - t_prev
        return totals

    def _initial_phase(self) -> Phase:
        return Phase.APPROACH if self.mode is RunMode.THERMAL_NAV else Phase.EXPLORE

    def metrics(self) -> dict:
        return {
            "outcome": self.outcome,
            "classification": self.classification.value if self.classification else None,
            "duration_s": self.duration,
            "path_length_m": self.path_length,
            "mean_speed_cm_s": 100.0 * self.mean_speed,
            "give_ups": self.give_ups,
            "estimates": len(self.estimates),
            "overshoot": self.overshoot,
            "phase3_arrival": self.phase3_arrival,
            "false_human": self.false_human,
            "coverage": self.coverage,
            "imu_final_error_m": self.imu_final_error,
        }

    def to_dict(self) -> dict:
        return to_jsonable({
            "seed": self.seed,
            "mode": self.mode,
            "metrics": self.metrics(),
            "phase_durations_s": self.phase_durations(),
            "timeline": [
                {"t": e.t, "from": e.phase_from, "to": e.phase_to, "reason": e.reason, "frame": e.frame_index}
                for e in self.events
            ],
            "estimates": [
                {"x": e.x_t, "y": e.y_t, "upsilon": e.upsilon, "alpha": e.alpha} for e in self.estimates
            ],
            "arrival_distances_m": self.arrival_distances,
            # Polyline at the camera rate keeps the report compact
            "trajectory": [list(row) for row in self.trajectory[::self.polyline_stride]],
            "transition_frames": {str(k): v for k, v in sorted(self.transition_frames.items())},
        })


class MissionRunner:
    """Tick loop: locomotion at ``motion.dt``, one IR frame per camera period."""

    def __init__(self, config: ExplorerConfig, world: World, seed: int,
                 mode: RunMode = RunMode.MISSION, start: Pose | None = None):
        self.config = config
        self.world = world
        self.seed = seed
        self.mode = mode
        self.motion_rng, self.camera_rng, mission_rng, imu_rng, self.yaw_rng = spawn_rngs(seed, 5)
        self.mission = Mission(
            config=config.mission,
            camera=config.camera,
            blob=config.blob,
            strategy=config.strategy,
            rng=mission_rng,
            phase=Phase.APPROACH if mode is RunMode.THERMAL_NAV else Phase.EXPLORE,
            classify_enabled=mode is RunMode.MISSION,
        )
        self.pose = start or self._start_pose()
        self.walk = WalkState()
        self.grid = world.new_grid()
        self.grid.mark_points([self.pose.x], [self.pose.y])

        self.uses_imu = config.mission.localization is Localization.IMU
        self.tracker: ImuTracker | None = None
        self.gait: GaitSynthesizer | None = None
        if self.uses_imu:
            imu = config.imu
            self.gait = GaitSynthesizer(imu.k_true, imu.gait_freq, imu.noise_sd, imu_rng, imu.rate)
            self.tracker = ImuTracker(imu.k_seed, imu.window_s, imu.rate, start=(self.pose.x, self.pose.y, 0.0),
                                      start_yaw=self.pose.yaw, tolerance=imu.quat_tolerance)

    def _start_pose(self) -> Pose:
        ws = self.config.world
        x, y = ws.start
        if ws.start_yaw is not None:
            yaw = ws.start_yaw
        elif self.mode is RunMode.THERMAL_NAV and self.world.sources:
            src = self.world.nearest_source(x, y)
            spread = self.config.mission.initial_yaw_spread
            yaw = math.degrees(math.atan2(src.center[1] - y, src.center[0] - x)) + self.yaw_rng.uniform(-spread, spread)
        else:
            yaw = self.yaw_rng.uniform(-180.0, 180.0)
        return Pose(x, y, 0.0, yaw)

    def _nav_pose(self) -> Pose:
        if self.tracker is None:
            return self.pose
        # The tracking variant approaches on the external tracker's pose, i.e. the true one
        if (self.mission.phase is Phase.APPROACH
                and self.config.mission.navigation is NavigationVariant.TRACKING):
            return self.pose
        return self.tracker.pose()

    def _tick(self, pose: Pose, frame: IrImage | None) -> TickResult:
        mission = self.mission
        if mission.phase is Phase.EXPLORE:
            return phase1_tick(mission, pose, self.world, frame)
        if mission.phase is Phase.APPROACH:
            if self.config.mission.navigation is NavigationVariant.TRACKING:
                return phase2_tracking_tick(mission, pose, frame)
            return phase2_onboard_tick(mission, pose, frame)
        return classify_tick(mission, frame)

    def _move(self, result: TickResult, dt: float) -> Pose:
        if result.command is None:
            return self.pose
        return apply_stimulus(
            self.pose, result.command, self.config.motion, self.motion_rng, dt,
            arena=self.world.arena, walk_state=self.walk, max_turn=result.max_turn,
        )

    def _source_seen(self, pose: Pose, blob: BlobResult | None):
        """The active source whose bearing best matches the blob, if any is in view."""
        if blob is None:
            return None
        bearing = pose.yaw - self.config.camera.h_fov / 2.0 + blob_alpha(blob, self.config.camera)
        best, best_err = None, math.inf
        for src in self.world.active_sources(self.mission.now):
            err = abs(angle_difference(pose.bearing_to(*src.center), bearing))
            if err <= self.config.camera.h_fov / 2.0 and err < best_err:
                best, best_err = src, err
        return best

    def run(self) -> MissionReport:
        cfg = self.config
        mission = self.mission
        dt = cfg.motion.dt
        frame_every = max(1, int(round(cfg.camera.period / dt)))
        budget = cfg.mission.nav_time_limit if self.mode is RunMode.THERMAL_NAV else cfg.mission.time_budget_s
        total_ticks = int(round(budget / dt))
        start = self.pose
        report = MissionReport(seed=self.seed, mode=self.mode, outcome="", duration=budget,
                               start=start.xy, polyline_stride=frame_every)
        report.trajectory.append((0.0, start.x, start.y, start.yaw, mission.phase.value))
        outcome: str | None = None

        for k in range(total_ticks):
            t = k * dt
            mission.now = t
            frame = None
            if self.mode is not RunMode.EXPLORE_ONLY and k % frame_every == 0:
                frame = render_ir(self.world, self.pose, cfg.camera, self.camera_rng, t)
                mission.frame_index += 1

            result = self._tick(self._nav_pose(), frame)
            if result.transition is not None and frame is not None:
                report.transition_frames[mission.frame_index] = frame.to_rows()

            if mission.classification is not None:
                report.duration = t
                seen = self._source_seen(self.pose, mission.classified_blob)
                report.false_human = (mission.classification is Classification.HUMAN
                                      and (seen is None or seen.kind is not SourceKind.HUMAN))
                outcome = (MissionOutcome.HUMAN_FOUND if mission.classification is Classification.HUMAN
                           else MissionOutcome.NOT_HUMAN).value
                break
            if result.give_up and self.mode is RunMode.THERMAL_NAV:
                report.duration = t
                outcome = NavOutcome.GAVE_UP.value
                break
            new_pose = self._move(result, dt)
            step = math.hypot(new_pose.x - self.pose.x, new_pose.y - self.pose.y)
            if step > 0:
                self.grid.mark_segment(self.pose.xy, new_pose.xy)
                report.path_length += step
            if self.tracker is not None:
                self.tracker.feed_trace(self.gait.interval(t, t + dt, step / dt, new_pose.yaw))
            self.pose = new_pose
            report.trajectory.append((t + dt, new_pose.x, new_pose.y, new_pose.yaw, mission.phase.value))

            if self.mode is RunMode.THERMAL_NAV and self._reached_source():
                report.duration = t + dt
                outcome = NavOutcome.SUCCESS.value
                break

        if outcome is None:
            outcome = (NavOutcome.TIMEOUT.value if self.mode is RunMode.THERMAL_NAV
                       else MissionOutcome.NOT_FOUND.value)
        report.outcome = outcome
        report.classification = mission.classification
        report.events = list(mission.events)
        report.estimates = list(mission.estimates)
        report.give_ups = mission.give_ups
        report.phase3_arrival = mission.phase3_arrival
        report.coverage = self.grid.fraction()
        self._finish_approach_metrics(report, start)
        if self.tracker is not None:
            est = self.tracker.state.position
            report.imu_final_error = math.hypot(est[0] - self.pose.x, est[1] - self.pose.y)
        logger.debug("mission seed=%d finished: %s after %.1f s", self.seed, outcome, report.duration)
        return report

    def _reached_source(self) -> bool:
        radius = self.config.mission.success_radius
        return any(src.surface_distance(self.pose.x, self.pose.y) < radius
                   for src in self.world.active_sources(self.mission.now))

    def _finish_approach_metrics(self, report: MissionReport, start: Pose) -> None:
        src = self.world.nearest_source(start.x, start.y)
        if src is None:
            return
        cx, cy = src.center
        report.arrival_distances = [math.hypot(x - cx, y - cy) for x, y in self.mission.arrivals]
        if len(report.estimates) >= 3:
            # Third estimate past the source along the start -> source ray
            est = report.estimates[2]
            ray = np.array([cx - start.x, cy - start.y])
            reach = float(np.hypot(*ray))
            if reach > 0:
                proj = float(np.dot([est.x_t - start.x, est.y_t - start.y], ray / reach))
                report.overshoot = proj > reach


def run_mission(config: ExplorerConfig, world: World, seed: int,
                mode: RunMode = RunMode.MISSION) -> MissionReport:
    return MissionRunner(config, world, seed, mode).run()
