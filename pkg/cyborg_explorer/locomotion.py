"""Insect locomotion: natural-walk state machine, stimulated responses, go-to-point controller.

The natural walk follows the open-space / wall-following state machine with
instantaneous turns between straight segments. Time inside a segment or a stop
is consumed in one event step, so long stops cost a single iteration no matter
how small the tick is.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np

from .config import MotionParams
from .models import Pose, StimCommand, TurnDirection, Wall, WalkMode
from .utils import angle_difference, bearing_deg, normalize_angle
from .world import WALL_NORMALS, Arena

logger = logging.getLogger(__name__)

SegmentCallback = Callable[[tuple[float, float], tuple[float, float]], None]

_EPS = 1e-12
_MAX_EVENTS_PER_STEP = 100_000


# ── Sampling ─────────────────────────────────────────────────


def _truncated_normal(rng: np.random.Generator, mean: float, sd: float, floor: float) -> float:
    return max(floor, float(rng.normal(mean, sd)))


def sample_segment_length(rng: np.random.Generator, params: MotionParams) -> float:
    return _truncated_normal(rng, params.straight_len_mean, params.straight_len_sd, 1e-3)


def sample_stop_time(rng: np.random.Generator, params: MotionParams) -> float:
    return _truncated_normal(rng, params.stop_mean, params.stop_sd, 0.0)


def sample_natural_speed(rng: np.random.Generator, params: MotionParams) -> float:
    return _truncated_normal(rng, params.v_nat_mean, params.v_nat_sd, params.min_speed)


def sample_turn_with_direction(
    rng: np.random.Generator,
    last_dir: TurnDirection | None,
    params: MotionParams | None = None,
) -> tuple[float, TurnDirection]:
    """Signed turn angle and the direction it was taken in."""
    params = params or MotionParams()
    u = rng.random()
    if last_dir is None:
        direction = TurnDirection.LEFT if u < 0.5 else TurnDirection.RIGHT
    elif u < params.p_persist:
        direction = last_dir
    else:
        direction = last_dir.opposite()
    draw = rng.vonmises(math.radians(params.turn_mu), params.turn_kappa)
    magnitude = abs(math.degrees(float(draw)))
    return direction.sign * magnitude, direction


def sample_turn(
    rng: np.random.Generator,
    last_dir: TurnDirection | None,
    params: MotionParams | None = None,
) -> float:
    """Von Mises turn magnitude folded to [0, 180]; repeats ``last_dir`` with p_persist."""
    return sample_turn_with_direction(rng, last_dir, params)[0]


def sample_wall_departure(rng: np.random.Generator, params: MotionParams | None = None) -> float:
    """Log-normal departure angle with the configured median and multiplicative shape."""
    params = params or MotionParams()
    beta = float(rng.lognormal(math.log(params.wall_depart_median), math.log(params.wall_depart_shape)))
    return min(max(beta, np.nextafter(0.0, 1.0)), float(np.nextafter(180.0, 0.0)))


# ── Natural walk ─────────────────────────────────────────────


@dataclass
class WalkStats:
    segments: int = 0
    segment_length_sum: float = 0.0
    open_segments: int = 0
    open_completed: int = 0
    open_stops: int = 0
    wall_stops: int = 0
    captures: int = 0
    exits: int = 0


@dataclass
class WalkState:
    mode: WalkMode = WalkMode.OPEN_WALK
    remaining_len: float = 0.0
    segment_len: float = 0.0
    remaining_stop: float = 0.0
    last_turn_dir: TurnDirection = TurnDirection.LEFT
    speed: float = 0.0
    wall: Wall | None = None
    wall_armed: bool = True
    stats: WalkStats = field(default_factory=WalkStats)


def _tangent_for(wall: Wall, yaw: float) -> float:
    """Yaw of the wall tangent closest to the current heading."""
    nx, ny = WALL_NORMALS[wall]
    # Tangents are the normal rotated by +/-90 degrees
    normal_yaw = bearing_deg(nx, ny)
    left = normalize_angle(normal_yaw + 90.0)
    right = normalize_angle(normal_yaw - 90.0)
    if abs(angle_difference(left, yaw)) <= abs(angle_difference(right, yaw)):
        return left
    return right


def _inward_turn_sign(wall: Wall, tangent_yaw: float) -> int:
    nx, ny = WALL_NORMALS[wall]
    rad = math.radians(tangent_yaw + 90.0)
    return 1 if math.cos(rad) * nx + math.sin(rad) * ny > 0 else -1


def _capture(state: WalkState, pose: Pose, arena: Arena, params: MotionParams,
             rng: np.random.Generator) -> Pose:
    wall, _ = arena.nearest_wall(pose.x, pose.y)
    state.mode = WalkMode.WALL_FOLLOW
    state.wall = wall
    state.remaining_len = sample_segment_length(rng, params)
    state.segment_len = state.remaining_len
    state.speed = sample_natural_speed(rng, params)
    state.stats.captures += 1
    logger.debug("wall capture on %s at (%.3f, %.3f)", wall.value, pose.x, pose.y)
    return Pose(pose.x, pose.y, pose.z, _tangent_for(wall, pose.yaw), pose.pitch, pose.roll)


def _move(pose: Pose, distance: float, arena: Arena | None) -> Pose:
    moved = pose.moved(distance)
    if arena is not None:
        x, y = arena.clamp(moved.x, moved.y)
        moved = moved.at(x, y)
    return moved


def step_natural(
    state: WalkState,
    pose: Pose,
    params: MotionParams,
    rng: np.random.Generator,
    dt: float,
    arena: Arena | None = None,
    on_segment: SegmentCallback | None = None,
) -> tuple[WalkState, Pose]:
    """Advance the natural walk by ``dt`` seconds.

    ``state`` is updated in place and returned with the new pose. Every
    straight piece of travel is reported through ``on_segment``.
    """
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    capture = params.wall_capture
    t_left = dt

    for _ in range(_MAX_EVENTS_PER_STEP):
        if t_left <= _EPS:
            break

        if state.mode in (WalkMode.OPEN_STOP, WalkMode.WALL_STOP):
            used = min(t_left, state.remaining_stop)
            state.remaining_stop -= used
            t_left -= used
            if state.remaining_stop <= _EPS:
                state.remaining_stop = 0.0
                state.mode = WalkMode.OPEN_WALK if state.mode is WalkMode.OPEN_STOP else WalkMode.WALL_FOLLOW
                state.remaining_len = 0.0
            continue

        if state.mode is WalkMode.OPEN_WALK:
            if arena is not None:
                dist = arena.nearest_wall(pose.x, pose.y)[1]
                if not state.wall_armed and dist > capture:
                    state.wall_armed = True
                if state.wall_armed and dist <= capture:
                    pose = _capture(state, pose, arena, params, rng)
                    continue
            if state.remaining_len <= _EPS:
                state.remaining_len = sample_segment_length(rng, params)
                state.segment_len = state.remaining_len
                state.speed = sample_natural_speed(rng, params)
                state.stats.open_segments += 1
            elif state.speed <= 0.0:
                state.speed = sample_natural_speed(rng, params)
            seg_left = state.remaining_len
            reach = state.speed * t_left
            limit = math.inf
            if arena is not None:
                inset = capture if state.wall_armed else 0.0
                limit = arena.ray_exit_distance(pose.x, pose.y, pose.yaw, inset=inset)
            move = min(seg_left, reach, limit)
            hit_wall = limit < seg_left and limit <= reach
            start = pose.xy
            pose = _move(pose, move, arena)
            if on_segment is not None and move > 0:
                on_segment(start, pose.xy)
            t_left -= move / state.speed
            state.remaining_len -= move
            if not hit_wall and state.remaining_len <= _EPS:
                state.remaining_len = 0.0
                state.stats.segments += 1
                state.stats.segment_length_sum += state.segment_len
                state.stats.open_completed += 1
                turn, direction = sample_turn_with_direction(rng, state.last_turn_dir, params)
                state.last_turn_dir = direction
                pose = pose.turned(turn)
                if rng.random() < params.p_stop:
                    state.mode = WalkMode.OPEN_STOP
                    state.remaining_stop = sample_stop_time(rng, params)
                    state.stats.open_stops += 1
            elif hit_wall:
                state.wall_armed = True
                pose = _capture(state, pose, arena, params, rng)
            continue

        # Wall following
        assert arena is not None and state.wall is not None
        if state.remaining_len <= _EPS:
            if rng.random() < params.p_exit:
                tangent = _tangent_for(state.wall, pose.yaw)
                beta = sample_wall_departure(rng, params)
                pose = Pose(pose.x, pose.y, pose.z,
                            tangent + _inward_turn_sign(state.wall, tangent) * beta,
                            pose.pitch, pose.roll)
                logger.debug("wall exit from %s, departure %.1f deg", state.wall.value, beta)
                state.mode = WalkMode.OPEN_WALK
                state.wall = None
                state.wall_armed = False
                state.remaining_len = 0.0
                state.stats.exits += 1
            elif rng.random() < params.p_stop:
                state.mode = WalkMode.WALL_STOP
                state.remaining_stop = sample_stop_time(rng, params)
                state.stats.wall_stops += 1
            else:
                state.remaining_len = sample_segment_length(rng, params)
                state.segment_len = state.remaining_len
                state.speed = sample_natural_speed(rng, params)
            continue
        if state.speed <= 0.0:
            state.speed = sample_natural_speed(rng, params)
        corner = arena.ray_exit_distance(pose.x, pose.y, pose.yaw, inset=capture)
        if corner <= _EPS:
            # Corner: follow the wall ahead, leaving the old one along its normal
            nx, ny = WALL_NORMALS[state.wall]
            state.wall = _wall_ahead(pose.yaw)
            pose = Pose(pose.x, pose.y, pose.z, bearing_deg(nx, ny), pose.pitch, pose.roll)
            continue
        move = min(state.remaining_len, state.speed * t_left, corner)
        start = pose.xy
        pose = _move(pose, move, arena)
        if on_segment is not None and move > 0:
            on_segment(start, pose.xy)
        t_left -= move / state.speed
        state.remaining_len -= move
        if state.remaining_len <= _EPS:
            state.remaining_len = 0.0
            state.stats.segments += 1
            state.stats.segment_length_sum += state.segment_len
    else:
        raise RuntimeError("natural walk did not converge within one step")

    return state, pose


def _wall_ahead(yaw: float) -> Wall:
    hx, hy = math.cos(math.radians(yaw)), math.sin(math.radians(yaw))
    if abs(hx) >= abs(hy):
        return Wall.RIGHT if hx > 0 else Wall.LEFT
    return Wall.TOP if hy > 0 else Wall.BOTTOM


# ── Stimulated responses and controller ──────────────────────


def apply_stimulus(
    pose: Pose,
    cmd: StimCommand,
    params: MotionParams,
    rng: np.random.Generator,
    dt: float,
    *,
    arena: Arena | None = None,
    walk_state: WalkState | None = None,
    max_turn: float | None = None,
    on_segment: SegmentCallback | None = None,
) -> Pose:
    """Pose after ``dt`` seconds of the commanded response.

    Accelerate moves forward at a sampled stimulated speed, turns rotate at a
    sampled stimulated angular speed (capped at ``max_turn`` degrees), and
    ``NONE`` runs one natural-walk step on ``walk_state``.
    """
    if cmd is StimCommand.ARRIVED:
        raise ValueError("ARRIVED is not a stimulus")
    if cmd is StimCommand.ACCELERATE:
        v = _truncated_normal(rng, params.v_stim_mean, params.v_stim_sd, params.min_speed)
        start = pose.xy
        moved = _move(pose, v * dt, arena)
        if on_segment is not None:
            on_segment(start, moved.xy)
        return moved
    if cmd in (StimCommand.TURN_LEFT, StimCommand.TURN_RIGHT):
        omega = _truncated_normal(rng, params.omega_stim_mean, params.omega_stim_sd, 0.0)
        delta = omega * dt
        if max_turn is not None:
            delta = min(delta, max(0.0, max_turn))
        sign = 1.0 if cmd is StimCommand.TURN_LEFT else -1.0
        return pose.turned(sign * delta)
    state = walk_state if walk_state is not None else WalkState()
    _, moved = step_natural(state, pose, params, rng, dt, arena, on_segment)
    return moved


def goto_point(
    pose: Pose,
    target: tuple[float, float],
    theta_t: float = 20.0,
    d_t: float = 0.10,
) -> StimCommand:
    """Go-to-point rule: arrive inside ``d_t``, else steer until within ``theta_t``."""
    distance = pose.distance_to(*target)
    if distance < d_t:
        return StimCommand.ARRIVED
    error = angle_difference(pose.bearing_to(*target), pose.yaw)
    if abs(error) <= theta_t:
        return StimCommand.ACCELERATE
    return StimCommand.TURN_LEFT if error > 0 else StimCommand.TURN_RIGHT
