"""Exploration trials at study scale.

A 24-hour trial at a 0.1 s tick is close to a million ticks, so the walker is
advanced in macro steps. Under go-to-point control the turn phases run tick by
tick, but each straight (Accelerate) phase is solved in closed form: the
distance to the next event (bearing error leaving the threshold, arrival, wall
margin, target detection) is found analytically and the per-tick speeds are
drawn as one vector. The natural walk already consumes straight segments and
stops as single events.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .config import ExplorerConfig, MotionParams, StrategyParams
from .explore import next_destination, wall_redirect
from .locomotion import WalkState, apply_stimulus, goto_point, step_natural
from .models import Destination, Pose, StimCommand, Strategy
from .world import Arena, CoverageGrid, World, spawn_rngs

logger = logging.getLogger(__name__)

# Simulated seconds per natural-walk call; bounds the search-time resolution
NATURAL_CHUNK_S = 1.0


@dataclass
class ExplorationResult:
    strategy: Strategy
    seed: int
    checkpoint_times: list[float] = field(default_factory=list)
    coverage: list[float] = field(default_factory=list)
    search_time: float | None = None
    distance: float = 0.0
    destinations: int = 0
    redirects: int = 0
    final_pose: tuple[float, float] = (0.0, 0.0)

    @property
    def final_coverage(self) -> float:
        return self.coverage[-1] if self.coverage else 0.0

    def metrics(self) -> dict:
        return {
            "final_coverage": self.final_coverage,
            "found": self.search_time is not None,
            "search_time_min": None if self.search_time is None else self.search_time / 60.0,
            "distance_m": self.distance,
            "destinations": self.destinations,
            "redirects": self.redirects,
        }


def segment_hit_distance(
    p0: tuple[float, float],
    heading: tuple[float, float],
    length: float,
    center: tuple[float, float],
    radius: float,
) -> float | None:
    """Distance along a segment to its first point within ``radius`` of ``center``."""
    fx, fy = center[0] - p0[0], center[1] - p0[1]
    if fx * fx + fy * fy <= radius * radius:
        return 0.0
    proj = fx * heading[0] + fy * heading[1]
    perp2 = fx * fx + fy * fy - proj * proj
    if proj < 0 or perp2 > radius * radius:
        return None
    s = proj - math.sqrt(radius * radius - perp2)
    return s if s <= length else None


def straight_event_distance(
    pose: Pose,
    target: tuple[float, float],
    theta_t: float,
    d_t: float,
) -> float:
    """Distance along the heading until go-to-point stops commanding Accelerate.

    With the target at along-track ``a`` and cross-track ``p``, the bearing
    error passes ``theta_t`` once a - s < |p| / tan(theta_t), and the walker
    arrives once (a - s)^2 + p^2 < d_t^2.
    """
    hx, hy = pose.heading()
    dx, dy = target[0] - pose.x, target[1] - pose.y
    along = dx * hx + dy * hy
    cross = abs(-dx * hy + dy * hx)
    s_turn = along - cross / math.tan(math.radians(theta_t))
    s_arrive = along - math.sqrt(d_t * d_t - cross * cross) if cross < d_t else math.inf
    return max(0.0, min(s_turn, s_arrive))


def draw_stim_speeds(rng: np.random.Generator, params: MotionParams, n: int) -> np.ndarray:
    return np.maximum(params.min_speed, rng.normal(params.v_stim_mean, params.v_stim_sd, n))


class ExplorationTrial:
    """One seeded coverage/search run of a single strategy."""

    def __init__(self, config: ExplorerConfig, strategy: Strategy, seed: int, world: World | None = None):
        self.config = config
        self.strategy = Strategy(strategy)
        self.seed = seed
        self.world = world or World.from_settings(config.world)
        self.arena: Arena = self.world.arena
        self.params: StrategyParams = replace(config.strategy, name=self.strategy)
        self.motion = config.motion
        self.motion_rng, self.dest_rng, yaw_rng = spawn_rngs(seed, 3)
        ws = config.world
        yaw = ws.start_yaw if ws.start_yaw is not None else float(yaw_rng.uniform(-180.0, 180.0))
        self.pose = Pose(ws.start[0], ws.start[1], 0.0, yaw)
        self.grid: CoverageGrid = self.world.new_grid()
        self.grid.mark_points([self.pose.x], [self.pose.y])
        self.target = tuple(ws.target) if (config.study.with_target and ws.target is not None) else None
        self.result = ExplorationResult(self.strategy, seed)

        self.dt = self.motion.dt
        self.total_ticks = int(round(config.study.duration_s / self.dt))
        self.checkpoint_ticks = max(1, int(round(config.study.checkpoint_s / self.dt)))
        self.tick = 0

    # ── bookkeeping ──

    def _check_target_at_start(self) -> None:
        if self.target is not None:
            if math.hypot(self.pose.x - self.target[0], self.pose.y - self.target[1]) <= self.detection_radius:
                self.result.search_time = 0.0

    @property
    def detection_radius(self) -> float:
        return self.config.world.detection_radius

    def _checkpoint(self) -> None:
        if self.tick % self.checkpoint_ticks == 0 or self.tick == self.total_ticks:
            t = self.tick * self.dt
            if not self.result.checkpoint_times or self.result.checkpoint_times[-1] < t:
                self.result.checkpoint_times.append(t)
                self.result.coverage.append(self.grid.fraction())

    def _ticks_to_checkpoint(self) -> int:
        next_cp = (self.tick // self.checkpoint_ticks + 1) * self.checkpoint_ticks
        return min(next_cp, self.total_ticks) - self.tick

    def _travel(self, p0: tuple[float, float], p1: tuple[float, float]) -> None:
        self.grid.mark_segment(p0, p1)
        self.result.distance += math.hypot(p1[0] - p0[0], p1[1] - p0[1])

    # ── runs ──

    def run(self) -> ExplorationResult:
        self._check_target_at_start()
        self.result.checkpoint_times.append(0.0)
        self.result.coverage.append(self.grid.fraction())
        if self.strategy is Strategy.NATURAL:
            self._run_natural()
        else:
            self._run_controlled()
        self.result.final_pose = self.pose.xy
        logger.debug("%s seed=%d coverage %.3f search %s", self.strategy.value, self.seed,
                     self.result.final_coverage, self.result.search_time)
        return self.result

    def _run_natural(self) -> None:
        state = WalkState()
        chunk_ticks = max(1, int(round(NATURAL_CHUNK_S / self.dt)))
        found_in_chunk = False

        def on_segment(p0: tuple[float, float], p1: tuple[float, float]) -> None:
            nonlocal found_in_chunk
            self._travel(p0, p1)
            if self.target is not None and self.result.search_time is None:
                length = math.hypot(p1[0] - p0[0], p1[1] - p0[1])
                if length > 0:
                    heading = ((p1[0] - p0[0]) / length, (p1[1] - p0[1]) / length)
                    if segment_hit_distance(p0, heading, length, self.target, self.detection_radius) is not None:
                        found_in_chunk = True

        while self.tick < self.total_ticks:
            n = min(chunk_ticks, self._ticks_to_checkpoint())
            state, self.pose = step_natural(state, self.pose, self.motion, self.motion_rng, n * self.dt,
                                            arena=self.arena, on_segment=on_segment)
            self.tick += n
            if found_in_chunk and self.result.search_time is None:
                self.result.search_time = self.tick * self.dt
            self._checkpoint()

    def _run_controlled(self) -> None:
        params = self.params
        dest: Destination | None = None
        while self.tick < self.total_ticks:
            if dest is None:
                dest = next_destination(params, self.pose, self.arena, self.dest_rng)
                self.result.destinations += 1
            if not dest.interim:
                redirect = wall_redirect(self.pose, self.arena, params.wall_margin, params.redirect_len)
                if redirect is not None:
                    dest = redirect
                    self.result.redirects += 1
            cmd = goto_point(self.pose, dest.target, params.theta_t, params.d_t)
            if cmd is StimCommand.ARRIVED:
                dest = None
                continue
            if cmd is StimCommand.ACCELERATE:
                self._straight(dest)
            else:
                self.pose = apply_stimulus(self.pose, cmd, self.motion, self.motion_rng, self.dt)
                self.tick += 1
            self._checkpoint()

    def _straight(self, dest: Destination) -> None:
        """Accelerate ticks until the next control event or checkpoint."""
        params = self.params
        pose = self.pose
        s_event = straight_event_distance(pose, dest.target, params.theta_t, params.d_t)
        if not dest.interim:
            s_event = min(s_event, self.arena.ray_exit_distance(pose.x, pose.y, pose.yaw, inset=params.wall_margin))
        s_event = min(s_event, self.arena.ray_exit_distance(pose.x, pose.y, pose.yaw))

        n_max = self._ticks_to_checkpoint()
        n_guess = int(math.ceil(s_event / max(self.motion.v_stim_mean * self.dt, 1e-9))) + 8
        n = max(1, min(n_max, n_guess))
        cum = np.cumsum(draw_stim_speeds(self.motion_rng, self.motion, n) * self.dt)
        k = int(np.searchsorted(cum, s_event, side="left"))
        used = min(k + 1, n)
        moved = float(cum[used - 1])

        start = pose.xy
        end_pose = pose.moved(moved)
        end = self.arena.clamp(end_pose.x, end_pose.y)
        self.pose = end_pose.at(*end)
        travel = math.hypot(end[0] - start[0], end[1] - start[1])
        self._travel(start, end)

        if self.target is not None and self.result.search_time is None and travel > 0:
            hit = segment_hit_distance(start, pose.heading(), travel, self.target, self.detection_radius)
            if hit is not None:
                k_hit = int(np.searchsorted(cum, hit, side="left"))
                self.result.search_time = (self.tick + min(k_hit + 1, used)) * self.dt
        self.tick += used


def run_exploration_trial(config: ExplorerConfig, strategy: Strategy, seed: int) -> ExplorationResult:
    return ExplorationTrial(config, strategy, seed).run()
